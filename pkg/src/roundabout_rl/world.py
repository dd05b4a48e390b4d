"""Vehicle kinematics, passive traffic behavior, safety events, and episodes.

A WorldState is owned by exactly one caller and mutated in place by step();
independent worlds never share state, so learners can run them concurrently.
All randomness flows through the world's own generator, making runs with
equal seeds bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RING_RADIUS_MARGIN, Polyline, RoundaboutLayout
from .maneuver import OutcomeKind

DT = 0.1
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.8
TARGET_SPEED = 8.33  # 30 km/h

# Half-width of the corridor used to decide "on my lane" when projecting
# other vehicles onto a path (matches the lane centreline offset).
CORRIDOR_HALF = 2.25
# Wider band used for prospective checks on vehicles still merging in.
MERGING_HALF = 3.2

# Car-following constants (jam distance, headway, exponent).
IDM_S0 = 2.0
IDM_T = 1.0
IDM_DELTA = 4
IDM_A = 1.5
IDM_B = 3.0

# Corridor used when passives look for a lead vehicle: wider than the strict
# lane band so vehicles on the tail of a merge blend register early.
PASSIVE_LEAD_HALF = 3.2

# Entry give-way: a passive approaching its stop line waits when committed
# ring traffic would reach its merge point within this many seconds (sized
# for a standing start clearing the merge blend).
GIVE_WAY_TIME = 5.0
# Ring vehicles can accelerate, so the upstream window never shrinks below
# what this floor speed would cover: a briefly slowed circulator still
# blocks the entry it is about to reach.
GIVE_WAY_SPEED_FLOOR = 4.5
GIVE_WAY_MIN_ARC = 6.0
GIVE_WAY_DOWNSTREAM = 6.0
GIVE_WAY_LOOKOUT = 18.0  # metres before the stop line where the check applies
# Approach shaping: within the lookout window a passive keeps its speed low
# enough to still stop at its braking anchor (a little before the geometric
# stop line), crossing at ~YIELD_APPROACH_SPEED when the ring is clear.
# This bounds the worst-case anchor-crossing speed no matter how late a
# conflict first appears.
YIELD_APPROACH_SPEED = 2.0
YIELD_APPROACH_BRAKE = 2.0
YIELD_APPROACH_GAIN = 10.0
# Passives brake toward a point this far before the stop line, so a vehicle
# held at its anchor keeps its nose clear of the circulating lane even where
# the merge blend dives steeply toward the ring.
YIELD_LINE_SETBACK = 1.0
# A vehicle that overshoots its anchor this little, this slowly, holds in
# place until the ring clears instead of committing to the merge.
GIVE_WAY_HOLD_ZONE = 1.3
GIVE_WAY_HOLD_SPEED = 2.5
# A vehicle past its stop line but this far outside the ring band has left
# on an exit road and no longer blocks entries.
RING_NEAR_BAND = 4.0

ROLE_ACTIVE = "active"
ROLE_PASSIVE = "passive"


@dataclass
class VehicleState:
    id: int
    role: str
    path: Polyline
    station: float
    speed: float
    aggressiveness: float
    target_speed: float = TARGET_SPEED
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    # Station of this vehicle's entry stop line on its own path; passives
    # give way there, the active is controlled against it.
    stop_station: float | None = None
    # Drawn once at spawn: this passive yields to a merging active iff
    # yield_draw < 1 - aggressiveness, making the yield probability exact.
    yield_draw: float = 1.0
    # Ring angle of this vehicle's merge point, for entry give-way checks.
    merge_angle: float | None = None

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if not 0.0 <= self.station <= self.path.length:
            raise ValueError("station outside path")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("vehicle footprint must be positive")

    @property
    def position(self) -> np.ndarray:
        return self.path.point_at(self.station)

    @property
    def heading(self) -> float:
        return self.path.heading_at(self.station)

    @property
    def yields_to_active(self) -> bool:
        return self.yield_draw < 1.0 - self.aggressiveness

    def pose_view(self) -> "PoseView":
        p = self.position
        return PoseView(
            id=self.id,
            role=self.role,
            x=float(p[0]),
            y=float(p[1]),
            heading=float(self.heading),
            speed=float(self.speed),
            length=self.length,
            width=self.width,
        )


@dataclass(frozen=True)
class PoseView:
    """A vehicle as seen by a sensor: pose and extent, no path knowledge."""

    id: int
    role: str
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float


@dataclass(frozen=True)
class SafetyEvents:
    d_s: int = 0
    c_f: int = 0
    collided: bool = False
    reached_goal: bool = False
    time_expired: bool = False

    def __post_init__(self) -> None:
        if sum((self.collided, self.reached_goal, self.time_expired)) > 1:
            raise ValueError("terminal flags are mutually exclusive")


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: OutcomeKind
    duration: float
    mean_speed: float


@dataclass(frozen=True)
class TrafficConfig:
    max_passives: int = 8
    level_name: str = "high"
    spawn_rate: float = 0.4  # vehicles/second (Poisson)

    def __post_init__(self) -> None:
        if self.max_passives < 0:
            raise ValueError("max_passives must be >= 0")
        if self.spawn_rate < 0:
            raise ValueError("spawn_rate must be >= 0")


@dataclass
class WorldState:
    layout: RoundaboutLayout
    vehicles: list[VehicleState]
    rng: np.random.Generator
    time_budget: float
    clock: float = 0.0
    next_spawn_time: float = 0.0
    next_vehicle_id: int = 1
    passive_collisions: int = 0  # diagnostic counter, does not end episodes
    _speed_sum: float = 0.0
    _speed_steps: int = 0

    @property
    def active(self) -> VehicleState:
        for v in self.vehicles:
            if v.role == ROLE_ACTIVE:
                return v
        raise LookupError("world has no active vehicle")

    @property
    def passives(self) -> list[VehicleState]:
        return [v for v in self.vehicles if v.role == ROLE_PASSIVE]

    def mean_active_speed(self) -> float:
        return self._speed_sum / self._speed_steps if self._speed_steps else 0.0


def obb_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centred at (x, y)."""
    c, s = math.cos(heading), math.sin(heading)
    fwd = np.array([c, s]) * (length / 2.0)
    side = np.array([-s, c]) * (width / 2.0)
    centre = np.array([x, y])
    return np.array([centre + fwd + side, centre + fwd - side, centre - fwd - side, centre - fwd + side])


def _project_interval(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    d = corners @ axis
    return float(d.min()), float(d.max())


def rects_overlap(ca: np.ndarray, cb: np.ndarray) -> bool:
    """Separating-axis test on two corner arrays; touching counts as overlap."""
    for corners in (ca, cb):
        for i in (0, 1):
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            a_lo, a_hi = _project_interval(ca, axis)
            b_lo, b_hi = _project_interval(cb, axis)
            if a_hi < b_lo or b_hi < a_lo:
                return False
    return True


def detect_collision(a: VehicleState | PoseView, b: VehicleState | PoseView) -> bool:
    va = a.pose_view() if isinstance(a, VehicleState) else a
    vb = b.pose_view() if isinstance(b, VehicleState) else b
    # cheap reject on bounding circles before the axis tests
    r = (math.hypot(va.length, va.width) + math.hypot(vb.length, vb.width)) / 2.0
    if math.hypot(va.x - vb.x, va.y - vb.y) > r:
        return False
    return rects_overlap(
        obb_corners(va.x, va.y, va.heading, va.length, va.width),
        obb_corners(vb.x, vb.y, vb.heading, vb.length, vb.width),
    )


def _corridor_ahead(v: VehicleState, other: VehicleState, half: float = CORRIDOR_HALF):
    """(gap, other_speed) if ``other`` sits ahead of v on v's lane, else None.

    Gap is bumper-to-bumper along v's path via centre projection.
    """
    s, lat = v.path.nearest_station(other.position)
    if lat >= half or s <= v.station:
        return None
    gap = s - v.station - (v.length + other.length) / 2.0
    return gap, other.speed


def idm_accel(speed, target, gap=None, closing=0.0, a=IDM_A, b=IDM_B) -> float:
    free = a * (1.0 - (speed / target) ** IDM_DELTA)
    if gap is None:
        return free
    s_star = IDM_S0 + max(0.0, speed * IDM_T + speed * closing / (2.0 * math.sqrt(a * b)))
    return a * (1.0 - (speed / target) ** IDM_DELTA - (s_star / max(gap, 0.01)) ** 2)


def merge_point_angle(layout: RoundaboutLayout, entry_index: int) -> float:
    mp = layout.entries[entry_index].merge_point
    c = layout.ring_center
    return math.atan2(mp[1] - c[1], mp[0] - c[0])


def _ring_conflict(world: WorldState, v: VehicleState) -> bool:
    """Ring traffic close enough to v's merge point that v must give way.

    Counts vehicles circulating inside the ring band and vehicles already
    committed past their own stop line (still on the merge blend), since
    both will occupy the ring shortly.  Vehicles well outside the band are
    on exit roads and ignored.
    """
    layout = world.layout
    centre = layout.ring_center
    if v.merge_angle is None:
        return False
    phi_m = v.merge_angle
    for other in world.vehicles:
        if other.id == v.id:
            continue
        pos = other.position
        r = math.hypot(pos[0] - centre[0], pos[1] - centre[1])
        if not layout.inside_ring(pos):
            committed = (
                other.stop_station is not None
                and other.station >= other.stop_station
                and r < layout.ring_radius + RING_NEAR_BAND
            )
            if not committed:
                continue
        phi_o = math.atan2(pos[1] - centre[1], pos[0] - centre[0])
        # arc length at the circulating-lane radius, not the vehicle's own
        # radius: a merger still out on its blend cuts the corner, so the
        # wider-radius arc would overstate how far away it really is
        lane_r = min(r, layout.ring_radius - RING_RADIUS_MARGIN)
        upstream = (phi_m - phi_o) % (2.0 * math.pi) * lane_r
        downstream = (phi_o - phi_m) % (2.0 * math.pi) * lane_r
        if downstream < GIVE_WAY_DOWNSTREAM:
            return True
        window = GIVE_WAY_TIME * max(other.speed, GIVE_WAY_SPEED_FLOOR)
        if upstream < max(GIVE_WAY_MIN_ARC, window):
            return True
    return False


def passive_policy(world: WorldState, v: VehicleState) -> float:
    """Comfort-bounded acceleration for one passive vehicle.

    Car-following toward target speed, give-way at the entry while ring
    traffic conflicts, and a probabilistic yield to an active vehicle that
    is merging into this passive's near-future corridor.
    """
    if v.role != ROLE_PASSIVE:
        raise ValueError("passive_policy controls passive vehicles only")
    candidates = [idm_accel(v.speed, v.target_speed)]

    active = None
    for other in world.vehicles:
        if other.id == v.id:
            continue
        if other.role == ROLE_ACTIVE:
            active = other
        # other passives register as leads from a wider band so vehicles on
        # the tail of a merge blend get braked for in time; the active only
        # counts once properly in lane (yielding to it is a separate draw)
        half = PASSIVE_LEAD_HALF if other.role == ROLE_PASSIVE else CORRIDOR_HALF
        hit = _corridor_ahead(v, other, half)
        if hit is not None:
            gap, other_speed = hit
            candidates.append(idm_accel(v.speed, v.target_speed, gap, v.speed - other_speed))
            # physics guard: brake flat out while the mutual stopping
            # envelope would close the gap (IDM alone reacts too softly
            # to a lead that stops dead)
            envelope = (v.speed**2 - other_speed**2) / (2.0 * IDM_B)
            if v.speed > other_speed and gap - 1.0 < envelope:
                candidates.append(-IDM_B)

    anchor = None if v.stop_station is None else v.stop_station - YIELD_LINE_SETBACK
    before_line = anchor is not None and v.station < anchor
    if before_line and anchor - v.station < GIVE_WAY_LOOKOUT:
        dist = anchor - v.station
        cap = math.sqrt(YIELD_APPROACH_SPEED**2 + 2.0 * YIELD_APPROACH_BRAKE * dist)
        if v.speed > cap:
            candidates.append(YIELD_APPROACH_GAIN * (cap - v.speed))
        if _ring_conflict(world, v):
            wall_gap = dist - v.length / 2.0
            candidates.append(idm_accel(v.speed, v.target_speed, wall_gap, v.speed))
            if wall_gap - 1.0 < v.speed**2 / (2.0 * IDM_B):
                candidates.append(-IDM_B)
    elif (
        anchor is not None
        and 0.0 <= v.station - anchor < GIVE_WAY_HOLD_ZONE
        and v.speed < GIVE_WAY_HOLD_SPEED
        and _ring_conflict(world, v)
    ):
        # barely over the anchor at a crawl: hold here until the ring clears
        # rather than crawling into circulating traffic
        candidates.append(-IDM_B)

    if active is not None and v.yields_to_active and not before_line:
        s, lat = v.path.nearest_station(active.position)
        horizon = 3.0 * v.speed + 8.0
        if lat < MERGING_HALF and 0.0 < s - v.station < horizon and active.speed > 0.3:
            gap = s - v.station - (v.length + active.length) / 2.0
            candidates.append(idm_accel(v.speed, v.target_speed, gap, v.speed - active.speed))

    return float(np.clip(min(candidates), -IDM_B, IDM_A))


def integrate(station: float, speed: float, accel: float, dt: float, path_length: float):
    """Advance one vehicle; never reverses, never over-runs the path end."""
    v1 = speed + accel * dt
    if v1 < 0.0:
        # decelerating to rest inside the step: advance the stopping distance
        ds = speed * speed / (2.0 * -accel) if accel < 0 else 0.0
        v1 = 0.0
    else:
        ds = speed * dt + 0.5 * accel * dt * dt
    return min(max(station + ds, 0.0), path_length), v1


def safety_violation(active: VehicleState, lead: VehicleState) -> int:
    """1 iff the bumper gap to the lead is under one second of own travel."""
    hit = _corridor_ahead(active, lead)
    if hit is None:
        return 0
    gap, _ = hit
    return 1 if gap < active.speed * 1.0 else 0


def cut_front_violation(active: VehicleState, passive: VehicleState, layout: RoundaboutLayout) -> int:
    """1 iff the active sits inside the passive's projected near-future lane.

    The region extends three seconds of passive travel ahead of the passive
    along its own path; the active violates it when its centre projects into
    that span within the lane corridor.  Strict at the far boundary.
    """
    if not layout.inside_ring(passive.position):
        return 0
    region = 3.0 * passive.speed * 1.0
    if region <= 0.0:
        return 0
    s, lat = passive.path.nearest_station(active.position)
    if lat >= CORRIDOR_HALF:
        return 0
    ahead = s - passive.station
    return 1 if 0.0 < ahead < region else 0


def _spawn_attempt(world: WorldState, cfg: TrafficConfig) -> None:
    layout = world.layout
    entry_idx = int(world.rng.integers(0, len(layout.entries)))
    routes = layout.routes_from_entry(entry_idx)
    if not routes:
        return
    route = routes[int(world.rng.integers(0, len(routes)))]
    aggr = float(world.rng.uniform(0.0, 1.0))
    draw = float(world.rng.uniform(0.0, 1.0))
    v = VehicleState(
        id=world.next_vehicle_id,
        role=ROLE_PASSIVE,
        path=route,
        station=0.0,
        speed=TARGET_SPEED / 2.0,
        aggressiveness=aggr,
        stop_station=layout.entries[entry_idx].stop_station,
        yield_draw=draw,
        merge_angle=merge_point_angle(layout, entry_idx),
    )
    spawn_pos = v.position
    for other in world.vehicles:
        p = other.position
        if math.hypot(p[0] - spawn_pos[0], p[1] - spawn_pos[1]) < 10.0:
            return  # silently skip a blocked spawn
    world.next_vehicle_id += 1
    world.vehicles.append(v)


def spawn_traffic(world: WorldState, cfg: TrafficConfig) -> WorldState:
    """Admit Poisson arrivals up to the concurrency cap; mutates the world."""
    if cfg.spawn_rate <= 0 or cfg.max_passives == 0:
        return world
    while world.clock >= world.next_spawn_time:
        world.next_spawn_time += float(world.rng.exponential(1.0 / cfg.spawn_rate))
        if len(world.passives) >= cfg.max_passives:
            continue
        _spawn_attempt(world, cfg)
    return world


def prepopulate(world: WorldState, cfg: TrafficConfig) -> None:
    """Place initial traffic along random routes so episodes start busy.

    Placements keep the merge blend clear and cap speed near the stop line,
    so every seeded vehicle can still honour the give-way rule from rest.
    """
    layout = world.layout
    for _ in range(cfg.max_passives):
        entry_idx = int(world.rng.integers(0, len(layout.entries)))
        routes = layout.routes_from_entry(entry_idx)
        if not routes:
            continue
        route = routes[int(world.rng.integers(0, len(routes)))]
        station = float(world.rng.uniform(0.0, 0.75 * route.length))
        aggr = float(world.rng.uniform(0.0, 1.0))
        draw = float(world.rng.uniform(0.0, 1.0))
        speed = float(world.rng.uniform(0.5, 1.0)) * TARGET_SPEED
        stop = layout.entries[entry_idx].stop_station
        blend_end = layout.entries[entry_idx].approach_path.length + 4.0
        if stop <= station < blend_end:
            station = max(0.0, stop - 4.0)  # pull back out of the blend
        gap_to_line = stop - station
        if 0.0 < gap_to_line < GIVE_WAY_LOOKOUT + 6.0:
            speed = min(speed, math.sqrt(4.0 * max(gap_to_line - 3.0, 0.0)))
        v = VehicleState(
            id=world.next_vehicle_id,
            role=ROLE_PASSIVE,
            path=route,
            station=station,
            speed=speed,
            aggressiveness=aggr,
            stop_station=layout.entries[entry_idx].stop_station,
            yield_draw=draw,
            merge_angle=merge_point_angle(layout, entry_idx),
        )
        pos = v.position
        blocked = False
        for other in world.vehicles:
            p = other.position
            if math.hypot(p[0] - pos[0], p[1] - pos[1]) < 12.0:
                blocked = True
                break
        if not blocked:
            world.next_vehicle_id += 1
            world.vehicles.append(v)

    # feasibility pass: cap each seeded speed so the vehicle can always
    # brake out of its lead's stopping envelope; caps cascade rearward,
    # so repeat until settled
    for _ in range(len(world.vehicles)):
        changed = False
        for v in world.passives:
            nearest = None
            for other in world.vehicles:
                if other.id == v.id:
                    continue
                hit = _corridor_ahead(v, other, PASSIVE_LEAD_HALF)
                if hit is not None and (nearest is None or hit[0] < nearest[0]):
                    nearest = hit
            if nearest is None:
                continue
            gap, u = nearest
            vmax = math.sqrt(max(u * u + 2.0 * IDM_B * (gap - IDM_S0), 0.0))
            if v.speed > vmax:
                v.speed = vmax
                changed = True
        if not changed:
            break


def step(world: WorldState, active_accel: float, dt: float = DT) -> SafetyEvents:
    """Advance every vehicle by dt and report post-step safety events."""
    if not math.isfinite(active_accel):
        raise ValueError(f"active acceleration must be finite, got {active_accel}")
    if dt <= 0:
        raise ValueError("dt must be > 0")

    active = world.active
    plans: list[tuple[VehicleState, float]] = []
    for v in world.vehicles:
        accel = active_accel if v.role == ROLE_ACTIVE else passive_policy(world, v)
        plans.append((v, accel))
    for v, accel in plans:
        v.station, v.speed = integrate(v.station, v.speed, accel, dt, v.path.length)
    world.clock += dt
    world._speed_sum += active.speed
    world._speed_steps += 1

    # drop passives that completed their route
    survivors = []
    for v in world.vehicles:
        if v.role == ROLE_PASSIVE and v.station >= v.path.length - 1e-9:
            continue
        survivors.append(v)
    world.vehicles = survivors

    passives = world.passives
    collided = any(detect_collision(active, p) for p in passives)
    for i in range(len(passives)):
        for j in range(i + 1, len(passives)):
            if detect_collision(passives[i], passives[j]):
                world.passive_collisions += 1

    reached = (not collided) and active.station >= active.path.length - 1e-9
    expired = (not collided) and (not reached) and world.clock >= world.time_budget - 1e-12

    d_s = max((safety_violation(active, p) for p in passives), default=0)
    c_f = max((cut_front_violation(active, p, world.layout) for p in passives), default=0)

    return SafetyEvents(
        d_s=d_s, c_f=c_f, collided=collided, reached_goal=reached, time_expired=expired
    )


def episode_terminal(world: WorldState, events: SafetyEvents) -> EpisodeOutcome | None:
    if events.collided:
        return EpisodeOutcome(OutcomeKind.CRASHED, world.clock, world.mean_active_speed())
    if events.reached_goal:
        return EpisodeOutcome(OutcomeKind.REACHED, world.clock, world.mean_active_speed())
    if events.time_expired or world.clock >= world.time_budget - 1e-12:
        return EpisodeOutcome(OutcomeKind.TIME_OVER, world.time_budget, world.mean_active_speed())
    return None


def new_world(
    layout: RoundaboutLayout,
    entry_index: int,
    rng: np.random.Generator,
    aggressiveness: float,
    active_path: Polyline | None = None,
    start_offset: float = 12.0,
    start_speed: float | None = None,
    target_speed: float = TARGET_SPEED,
    time_budget: float | None = None,
    traffic: TrafficConfig | None = None,
) -> WorldState:
    """Create an episode world with the active vehicle placed before its stop line."""
    entry = layout.entries[entry_index]
    path = active_path if active_path is not None else entry.merged_path
    stop_pos = entry.approach_path.point_at(entry.stop_station)
    stop_station, _ = path.nearest_station(stop_pos)
    start_station = max(0.0, stop_station - start_offset)
    if time_budget is None:
        time_budget = max(20.0, 4.0 * path.length / target_speed)
    active = VehicleState(
        id=0,
        role=ROLE_ACTIVE,
        path=path,
        station=start_station,
        speed=target_speed / 2.0 if start_speed is None else start_speed,
        aggressiveness=aggressiveness,
        target_speed=target_speed,
        stop_station=stop_station,
        merge_angle=merge_point_angle(layout, entry_index),
    )
    world = WorldState(layout=layout, vehicles=[active], rng=rng, time_budget=time_budget)
    world.next_spawn_time = float(rng.exponential(1.0 / traffic.spawn_rate)) if traffic and traffic.spawn_rate > 0 else math.inf
    if traffic is not None and traffic.max_passives > 0:
        prepopulate(world, traffic)
    return world
