"""Maneuver states, the acceleration law behind them, and the step reward.

All functions here are pure and stateless.  The three-way maneuver state is
the entire action space of the learner; longitudinal control follows from it
deterministically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class ManeuverState(enum.IntEnum):
    """Discrete insertion decision.  The integer order is the one-hot order."""

    PERMITTED = 0
    NOT_PERMITTED = 1
    CAUTION = 2


class OutcomeKind(enum.Enum):
    REACHED = "Reached"
    CRASHED = "Crashed"
    TIME_OVER = "TimeOver"


@dataclass(frozen=True)
class ComfortParams:
    """Comfort acceleration bounds; d_max is a positive braking magnitude."""

    a_max: float = 1.5
    d_max: float = 3.0
    h: float = 0.5  # hysteresis band above half target speed

    def __post_init__(self) -> None:
        if self.a_max <= 0 or self.d_max <= 0 or self.h < 0:
            raise ValueError("a_max, d_max must be > 0 and h >= 0")


@dataclass(frozen=True)
class RewardWeights:
    w_ds: float = 0.002
    w_cf: float = 0.005
    beta: float = 0.2
    gamma_crash: float = 1.8
    psi: float = 0.0045
    pen_caution: float = 0.05
    pen_notpermitted: float = 0.15

    def __post_init__(self) -> None:
        for name, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")


@dataclass(frozen=True)
class RewardBreakdown:
    r_danger: float
    r_terminal: float
    r_indecision: float
    r_speed: float

    @property
    def total(self) -> float:
        return self.r_danger + self.r_terminal + self.r_indecision + self.r_speed


def stopline_decel(speed: float, dist: float) -> float:
    """Deceleration magnitude that arrests the vehicle in exactly ``dist`` metres."""
    if dist <= 0:
        raise ValueError("dist must be > 0; a passed marker is the caller's case")
    return speed * speed / (2.0 * dist)


def acceleration_command(
    state: ManeuverState,
    agent_speed: float,
    target_speed: float,
    dist_to_stop: float,
    comfort: ComfortParams = ComfortParams(),
) -> float:
    """Longitudinal acceleration for one maneuver state.

    ``dist_to_stop`` is the arc distance to the stop line; zero or negative
    means the marker lies behind the vehicle, which under NOT_PERMITTED
    forces a full comfort brake.
    """
    if target_speed <= 0:
        raise ValueError("target_speed must be > 0")
    if state is ManeuverState.PERMITTED:
        return comfort.a_max if agent_speed < target_speed else 0.0
    if state is ManeuverState.NOT_PERMITTED:
        if dist_to_stop <= 0:
            return -comfort.d_max
        return -min(comfort.d_max, stopline_decel(agent_speed, dist_to_stop))
    half = target_speed / 2.0
    if agent_speed < half:
        return comfort.a_max / 2.0
    if agent_speed > half + comfort.h:
        return -comfort.d_max / 2.0
    return 0.0


def danger_reward(events, aggressiveness: float, w: RewardWeights = RewardWeights()) -> float:
    """Penalty for safety-distance and cut-front violations, scaled by caution."""
    alpha = 1.0 - aggressiveness
    return -w.w_ds * alpha * events.d_s - w.w_cf * alpha * events.c_f


def terminal_reward(
    outcome, aggressiveness: float, w: RewardWeights = RewardWeights()
) -> float:
    kind = outcome.kind if hasattr(outcome, "kind") else outcome
    if kind is OutcomeKind.REACHED:
        return 1.0
    if kind is OutcomeKind.CRASHED:
        return -w.beta - w.gamma_crash * (1.0 - aggressiveness)
    if kind is OutcomeKind.TIME_OVER:
        return -1.0
    raise ValueError(f"not a terminal outcome: {outcome!r}")


def indecision_reward(
    prev: ManeuverState, cur: ManeuverState, w: RewardWeights = RewardWeights()
) -> float:
    """Penalty for backing off an announced entry; other transitions are free."""
    if prev is ManeuverState.PERMITTED and cur is ManeuverState.CAUTION:
        return -w.pen_caution
    if prev is ManeuverState.PERMITTED and cur is ManeuverState.NOT_PERMITTED:
        return -w.pen_notpermitted
    return 0.0


def speed_reward(
    current_speed: float, target_speed: float, w: RewardWeights = RewardWeights()
) -> float:
    if target_speed <= 0:
        raise ValueError("target_speed must be > 0")
    return w.psi * current_speed / target_speed


def step_reward(
    events,
    outcome,
    prev_state: ManeuverState,
    cur_state: ManeuverState,
    current_speed: float,
    target_speed: float,
    aggressiveness: float,
    w: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Combine the four reward terms for one step; ``outcome`` may be None."""
    return RewardBreakdown(
        r_danger=danger_reward(events, aggressiveness, w),
        r_terminal=0.0 if outcome is None else terminal_reward(outcome, aggressiveness, w),
        r_indecision=indecision_reward(prev_state, cur_state, w),
        r_speed=speed_reward(current_speed, target_speed, w),
    )
