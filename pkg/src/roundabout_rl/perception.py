"""Ego-centric semantic rasterization and observation assembly.

Four binary layers rendered in the agent's frame of reference (the agent
faces grid "up"), stacked over recent steps and paired with the scalar
sensory channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import polygons_contain_many
from .maneuver import ManeuverState
from .world import ROLE_ACTIVE, PoseView, VehicleState, WorldState, merge_point_angle

GRID_SIZE = 84
WINDOW = 50.0
STACK_DEPTH = 4
CHANNEL_ORDER = ("navigable", "path", "obstacles", "stop_line")
STOP_LINE_REACH = 0.5  # metres either side of the painted line


@dataclass(frozen=True, eq=False)
class SemanticFrame:
    """One rasterized snapshot: 4 binary grids in channel order."""

    grid_size: int
    window: float
    channels: np.ndarray  # (4, grid_size, grid_size) uint8

    def __post_init__(self):
        expect = (len(CHANNEL_ORDER), self.grid_size, self.grid_size)
        if self.channels.shape != expect:
            raise ValueError(f"channel tensor must be {expect}, got {self.channels.shape}")

    @property
    def resolution(self) -> float:
        return self.window / self.grid_size

    @property
    def navigable(self) -> np.ndarray:
        return self.channels[0]

    @property
    def path(self) -> np.ndarray:
        return self.channels[1]

    @property
    def obstacles(self) -> np.ndarray:
        return self.channels[2]

    @property
    def stop_line(self) -> np.ndarray:
        return self.channels[3]

    @classmethod
    def zeros(cls, grid_size: int = GRID_SIZE, window: float = WINDOW) -> "SemanticFrame":
        shape = (len(CHANNEL_ORDER), grid_size, grid_size)
        return cls(grid_size, window, np.zeros(shape, dtype=np.uint8))


@dataclass(frozen=True)
class PerceptionNoiseConfig:
    pos_sigma: float = 0.5
    size_sigma: float = 0.2
    heading_sigma: float = 0.05
    enabled: bool = False

    def __post_init__(self):
        for name in ("pos_sigma", "size_sigma", "heading_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True, eq=False)
class NonVisualChannel:
    agent_speed: float
    target_speed: float
    aggressiveness: float
    last_action: np.ndarray  # one-hot over the three maneuver states

    def __post_init__(self):
        if self.agent_speed < 0 or self.target_speed < 0:
            raise ValueError("speeds must be >= 0")

    def as_vector(self) -> np.ndarray:
        """Scalar inputs the policy consumes: speeds normalized by target."""
        return np.array(
            [
                self.agent_speed / self.target_speed,
                self.target_speed / self.target_speed,
                self.aggressiveness,
                *self.last_action,
            ],
            dtype=np.float32,
        )


@dataclass(frozen=True, eq=False)
class ObservationBundle:
    frames: list  # k most recent SemanticFrames, oldest first
    nonvisual: NonVisualChannel

    def stacked_planes(self) -> np.ndarray:
        """(k*4, grid, grid) float32 tensor, oldest frame first."""
        return np.concatenate([f.channels for f in self.frames]).astype(np.float32)


def apply_perception_noise(world_view, cfg: PerceptionNoiseConfig, rng) -> list:
    """Noisy copy of a vehicle list; the agent's own entry passes through.

    Perturbs position, size, and heading of every other vehicle with
    independent zero-mean Gaussians.  Input objects are never mutated.
    """
    if not cfg.enabled:
        return list(world_view)
    out = []
    for v in world_view:
        if v.role == ROLE_ACTIVE:
            out.append(v)
            continue
        pv = v.pose_view() if isinstance(v, VehicleState) else v
        out.append(
            PoseView(
                id=pv.id,
                role=pv.role,
                x=pv.x + float(rng.normal(0.0, cfg.pos_sigma)) if cfg.pos_sigma else pv.x,
                y=pv.y + float(rng.normal(0.0, cfg.pos_sigma)) if cfg.pos_sigma else pv.y,
                heading=pv.heading + float(rng.normal(0.0, cfg.heading_sigma)) if cfg.heading_sigma else pv.heading,
                speed=pv.speed,
                length=max(0.1, pv.length + float(rng.normal(0.0, cfg.size_sigma))) if cfg.size_sigma else pv.length,
                width=max(0.1, pv.width + float(rng.normal(0.0, cfg.size_sigma))) if cfg.size_sigma else pv.width,
            )
        )
    return out


def _cell_centers(x: float, y: float, heading: float, grid_size: int, window: float) -> np.ndarray:
    """World coordinates of every cell center, shape (grid, grid, 2).

    Row 0 is the far side in the direction of travel: the agent faces "up".
    """
    res = window / grid_size
    offs = (np.arange(grid_size) + 0.5) * res - window / 2.0
    fwd = np.array([math.cos(heading), math.sin(heading)])
    right = np.array([math.sin(heading), -math.cos(heading)])
    rightward = offs[None, :, None] * right[None, None, :]
    forward = -offs[:, None, None] * fwd[None, None, :]
    return np.array([x, y])[None, None, :] + rightward + forward


def _min_distance_to_polyline(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest spot on the polyline."""
    verts = np.asarray(verts, dtype=float)
    if len(verts) == 1:
        return np.hypot(*(pts - verts[0]).T)
    a = verts[:-1]
    ab = verts[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ab2 = np.where(ab2 == 0.0, 1.0, ab2)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), 1024):  # chunked: N x segments blows up memory
        p = pts[lo : lo + 1024]
        rel = p[:, None, :] - a[None]
        t = np.clip(np.einsum("nsj,sj->ns", rel, ab) / ab2, 0.0, 1.0)
        proj = a[None] + t[:, :, None] * ab[None]
        d2 = ((p[:, None, :] - proj) ** 2).sum(-1)
        out[lo : lo + 1024] = np.sqrt(d2.min(1))
    return out


def _ego_entry_index(layout, ego) -> int | None:
    if ego.merge_angle is None:
        return None
    for i in range(len(layout.entries)):
        if abs(merge_point_angle(layout, i) - ego.merge_angle) < 1e-9:
            return i
    return None


def _footprint_mask(centers_flat: np.ndarray, pv: PoseView) -> np.ndarray:
    rel = centers_flat - np.array([pv.x, pv.y])
    c, s = math.cos(pv.heading), math.sin(pv.heading)
    along = rel[:, 0] * c + rel[:, 1] * s
    across = -rel[:, 0] * s + rel[:, 1] * c
    return (np.abs(along) <= pv.length / 2.0) & (np.abs(across) <= pv.width / 2.0)


def rasterize(
    world: WorldState,
    ego: VehicleState,
    grid_size: int = GRID_SIZE,
    window: float = WINDOW,
    vehicles: Sequence | None = None,
) -> SemanticFrame:
    """Render the four semantic layers around the agent.

    ``vehicles`` overrides the obstacle source (e.g. a noisy view from
    apply_perception_noise); navigable space, the remaining route, and the
    stop line always come from the true layout and ego state.
    """
    pos = ego.position
    centers = _cell_centers(pos[0], pos[1], ego.heading, grid_size, window)
    flat = centers.reshape(-1, 2)
    shape = (grid_size, grid_size)

    navigable = polygons_contain_many(world.layout.navigable_polygons, flat).reshape(shape)

    remaining = ego.path.tail_from(ego.station)
    near_path = _min_distance_to_polyline(flat, remaining) <= ego.width / 2.0
    path = near_path.reshape(shape)

    obstacles = np.zeros(len(flat), dtype=bool)
    reach = window * math.sqrt(2.0) / 2.0
    for v in vehicles if vehicles is not None else world.vehicles:
        pv = v.pose_view() if isinstance(v, VehicleState) else v
        if math.hypot(pv.x - pos[0], pv.y - pos[1]) > reach + math.hypot(pv.length, pv.width):
            continue
        obstacles |= _footprint_mask(flat, pv)
    obstacles = obstacles.reshape(shape)

    stop = np.zeros(shape, dtype=bool)
    entry_idx = _ego_entry_index(world.layout, ego)
    if entry_idx is not None:
        p1, p2 = world.layout.stop_segment(entry_idx)
        dist = _min_distance_to_polyline(flat, np.vstack([p1, p2]))
        stop = (dist <= STOP_LINE_REACH).reshape(shape)

    channels = np.stack([navigable, path, obstacles, stop]).astype(np.uint8)
    return SemanticFrame(grid_size, window, channels)


def build_observation(
    frame_history: Sequence[SemanticFrame],
    world: WorldState,
    ego: VehicleState,
    k: int = STACK_DEPTH,
    last_action: ManeuverState | None = None,
) -> ObservationBundle:
    """Stack the k latest frames (zero-padded early in the episode)."""
    recent = list(frame_history)[-k:]
    if recent:
        grid_size, window = recent[-1].grid_size, recent[-1].window
    else:
        grid_size, window = GRID_SIZE, WINDOW
    while len(recent) < k:
        recent.insert(0, SemanticFrame.zeros(grid_size, window))
    one_hot = np.zeros(len(ManeuverState), dtype=np.float32)
    if last_action is not None:
        one_hot[int(last_action)] = 1.0
    nonvisual = NonVisualChannel(
        agent_speed=float(ego.speed),
        target_speed=float(ego.target_speed),
        aggressiveness=float(ego.aggressiveness),
        last_action=one_hot,
    )
    return ObservationBundle(frames=recent, nonvisual=nonvisual)


def frames_to_binary(frames: Sequence[SemanticFrame]) -> tuple[dict, bytes]:
    """Flat export for debugging and the UI minimap.

    Header describes the tensor; payload is uint8, frames outermost, then
    channels, rows, columns (row-major within each channel).
    """
    if not frames:
        raise ValueError("need at least one frame")
    grid_size, window = frames[0].grid_size, frames[0].window
    for f in frames:
        if f.grid_size != grid_size or f.window != window:
            raise ValueError("frames must share grid_size and window")
    header = {"grid_size": grid_size, "window": window, "k": len(frames)}
    payload = np.stack([f.channels for f in frames]).tobytes()
    return header, payload
