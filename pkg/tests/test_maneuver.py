import math
from types import SimpleNamespace

import numpy as np
import pytest

from roundabout_rl.maneuver import (
    ComfortParams,
    ManeuverState,
    OutcomeKind,
    RewardWeights,
    acceleration_command,
    danger_reward,
    indecision_reward,
    speed_reward,
    step_reward,
    stopline_decel,
    terminal_reward,
)

P, NP, C = ManeuverState.PERMITTED, ManeuverState.NOT_PERMITTED, ManeuverState.CAUTION
COMFORT = ComfortParams()  # a_max 1.5, d_max 3.0, h 0.5
W = RewardWeights()


def events(d_s=0, c_f=0):
    return SimpleNamespace(d_s=d_s, c_f=c_f)


def reward_oracle(d_s, c_f, outcome, prev, cur, speed, target, aggr):
    """The whole reward in one expression, written independently of the module."""
    a = 1.0 - aggr
    terminal = 0.0
    if outcome is OutcomeKind.REACHED:
        terminal = 1.0
    elif outcome is OutcomeKind.CRASHED:
        terminal = -0.2 - 1.8 * a
    elif outcome is OutcomeKind.TIME_OVER:
        terminal = -1.0
    indecision = {(P, C): -0.05, (P, NP): -0.15}.get((prev, cur), 0.0)
    return -0.002 * a * d_s - 0.005 * a * c_f + terminal + indecision + 0.0045 * speed / target


class TestAccelerationCommand:
    def test_permitted_accelerates_until_target(self):
        assert acceleration_command(P, 4.0, 10.0, 30.0, COMFORT) == 1.5
        assert acceleration_command(P, 10.0, 10.0, 30.0, COMFORT) == 0.0
        assert acceleration_command(P, 12.0, 10.0, 30.0, COMFORT) == 0.0

    def test_not_permitted_brakes_as_needed(self):
        # needed = 100/50 = 2.0, under the comfort cap
        assert acceleration_command(NP, 10.0, 10.0, 25.0, COMFORT) == -2.0
        # needed = 5.0, capped at d_max
        assert acceleration_command(NP, 10.0, 10.0, 10.0, COMFORT) == -3.0
        # standing still before the line: nothing to do
        assert acceleration_command(NP, 0.0, 10.0, 5.0, COMFORT) == 0.0

    def test_not_permitted_past_stop_line_full_brake(self):
        assert acceleration_command(NP, 3.0, 10.0, 0.0, COMFORT) == -3.0
        assert acceleration_command(NP, 3.0, 10.0, -2.0, COMFORT) == -3.0

    @pytest.mark.parametrize(
        "speed,want",
        [
            (4.0, 0.75),  # below half target: gentle push
            (5.6, -1.5),  # above half + h: gentle brake
            (5.2, 0.0),  # inside the hysteresis band
            (5.0, 0.0),  # exactly half target
            (5.5, 0.0),  # exactly half + h
        ],
    )
    def test_caution_band(self, speed, want):
        assert acceleration_command(C, speed, 10.0, 30.0, COMFORT) == want

    def test_command_always_within_comfort_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            state = ManeuverState(rng.integers(0, 3))
            a = acceleration_command(
                state, rng.uniform(0, 20), 10.0, rng.uniform(-5, 50), COMFORT
            )
            assert -COMFORT.d_max <= a <= COMFORT.a_max

    def test_bad_target_speed_rejected(self):
        with pytest.raises(ValueError):
            acceleration_command(P, 1.0, 0.0, 10.0, COMFORT)


class TestStoplineDecel:
    def test_known_values(self):
        assert stopline_decel(10.0, 25.0) == pytest.approx(2.0)
        assert stopline_decel(0.0, 7.0) == 0.0
        assert stopline_decel(10.0, 10.0) == pytest.approx(5.0)

    def test_matches_kinematics_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            v, d = rng.uniform(0, 20), rng.uniform(0.1, 60)
            assert stopline_decel(v, d) == pytest.approx(v**2 / (2 * d), rel=1e-12)

    def test_past_marker_rejected(self):
        with pytest.raises(ValueError):
            stopline_decel(5.0, 0.0)


class TestRewardTerms:
    def test_danger_examples(self):
        assert danger_reward(events(1, 0), 0.0, W) == pytest.approx(-0.002)
        assert danger_reward(events(1, 1), 1.0, W) == 0.0
        assert danger_reward(events(0, 1), 0.5, W) == pytest.approx(-0.0025)

    def test_terminal_examples(self):
        assert terminal_reward(OutcomeKind.REACHED, 0.3, W) == 1.0
        assert terminal_reward(OutcomeKind.CRASHED, 0.0, W) == pytest.approx(-2.0)
        assert terminal_reward(OutcomeKind.CRASHED, 1.0, W) == pytest.approx(-0.2)
        assert terminal_reward(OutcomeKind.TIME_OVER, 0.7, W) == -1.0

    def test_terminal_accepts_outcome_objects(self):
        outcome = SimpleNamespace(kind=OutcomeKind.CRASHED)
        assert terminal_reward(outcome, 0.0, W) == pytest.approx(-2.0)

    def test_indecision_only_penalizes_backing_off(self):
        assert indecision_reward(P, C, W) == -0.05
        assert indecision_reward(P, NP, W) == -0.15
        for pair in [(C, NP), (P, P), (NP, P), (C, P), (NP, C), (C, C), (NP, NP)]:
            assert indecision_reward(*pair, W) == 0.0

    def test_speed_examples(self):
        assert speed_reward(10.0, 10.0, W) == pytest.approx(0.0045)
        assert speed_reward(0.0, 10.0, W) == 0.0
        assert speed_reward(5.0, 10.0, W) == pytest.approx(0.00225)

    def test_step_reward_composition_examples(self):
        r = step_reward(events(), None, NP, NP, 10.0, 10.0, 0.4, W)
        assert r.total == pytest.approx(0.0045)
        r = step_reward(events(), SimpleNamespace(kind=OutcomeKind.REACHED), P, P, 0.0, 10.0, 0.0, W)
        assert r.total == pytest.approx(1.0)
        r = step_reward(events(d_s=1), None, P, NP, 0.0, 10.0, 0.0, W)
        assert r.total == pytest.approx(-0.152)

    def test_breakdown_total_is_exact_sum(self):
        r = step_reward(events(1, 1), None, P, C, 3.0, 8.0, 0.25, W)
        assert r.total == r.r_danger + r.r_terminal + r.r_indecision + r.r_speed

    def test_matches_single_expression_oracle(self):
        rng = np.random.default_rng(42)
        outcomes = [None, OutcomeKind.REACHED, OutcomeKind.CRASHED, OutcomeKind.TIME_OVER]
        for _ in range(10_000):
            d_s, c_f = int(rng.integers(0, 2)), int(rng.integers(0, 2))
            outcome = outcomes[rng.integers(0, 4)]
            prev, cur = ManeuverState(rng.integers(0, 3)), ManeuverState(rng.integers(0, 3))
            speed = float(rng.uniform(0, 15))
            target = float(rng.uniform(1, 15))
            aggr = float(rng.uniform(-1.5, 1.5))
            got = step_reward(events(d_s, c_f), outcome, prev, cur, speed, target, aggr, W).total
            want = reward_oracle(d_s, c_f, outcome, prev, cur, speed, target, aggr)
            assert got == pytest.approx(want, abs=1e-12)

    def test_penalty_magnitude_decreases_with_aggressiveness(self):
        rng = np.random.default_rng(5)
        grid = [0.0, 0.25, 0.5, 0.75, 0.99]
        for _ in range(100):
            steps = [
                (events(int(rng.integers(0, 2)), int(rng.integers(0, 2))), None)
                for _ in range(rng.integers(3, 20))
            ]
            steps.append((events(), SimpleNamespace(kind=OutcomeKind.CRASHED)))
            penalties = []
            for aggr in grid:
                total = sum(
                    step_reward(ev, out, NP, NP, 0.0, 10.0, aggr, W).total for ev, out in steps
                )
                penalties.append(-total)
            assert all(a > b for a, b in zip(penalties, penalties[1:])), penalties

    def test_speed_term_independent_of_aggressiveness(self):
        vals = {speed_reward(6.0, 10.0, W) for _ in range(3)}
        assert len(vals) == 1

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            RewardWeights(w_ds=-0.1)

    def test_non_terminal_passthrough_is_zero(self):
        r = step_reward(events(), None, C, C, 0.0, 10.0, 0.0, W)
        assert r.r_terminal == 0.0

    def test_unknown_outcome_rejected(self):
        with pytest.raises(ValueError):
            terminal_reward("Exploded", 0.0, W)
