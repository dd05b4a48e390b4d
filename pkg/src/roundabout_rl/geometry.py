"""Planar geometry: polyline paths, cubic Bezier curves, and roundabout layouts.

Everything here is immutable after construction and safe to share between
concurrent learners; operations are pure functions of their inputs plus an
explicitly passed random generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LAYOUT_SCHEMA_VERSION = 1

# Default spacing when a Bezier patch is resampled back into a polyline.
# Finer than a vehicle length, coarse enough to keep polylines small.
BEZIER_ARC_STEP = 0.5

# Ring radius is padded by this when deriving the circulating region from
# the entry merge points (merge points sit on the lane centreline).
RING_RADIUS_MARGIN = 3.0


class LayoutError(ValueError):
    """Raised when a layout document violates the schema or an invariant."""


@dataclass(frozen=True)
class Vec2:
    """A point or displacement in metres."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2 components ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Pose:
    position: Vec2
    heading: float  # radians, counterclockwise from +x


class Polyline:
    """An ordered chain of distinct points with cumulative arc-length stations.

    Points are stored as an (N, 2) float array; ``stations[i]`` is the arc
    length from the first vertex to vertex i, so stations are strictly
    increasing and start at 0.
    """

    __slots__ = ("points", "stations", "_seg_vec", "_seg_len")

    def __init__(self, points: Iterable) -> None:
        pts = np.asarray(
            [(p.x, p.y) if isinstance(p, Vec2) else tuple(p) for p in points],
            dtype=float,
        )
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs a sequence of 2-d points")
        if pts.shape[0] < 2:
            raise ValueError("polyline needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline has non-finite coordinates")
        seg_vec = np.diff(pts, axis=0)
        seg_len = np.hypot(seg_vec[:, 0], seg_vec[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError("consecutive polyline points must be distinct")
        self.points = pts
        self.points.setflags(write=False)
        self.stations = np.concatenate(([0.0], np.cumsum(seg_len)))
        self.stations.setflags(write=False)
        self._seg_vec = seg_vec
        self._seg_len = seg_len

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    def __len__(self) -> int:
        return self.points.shape[0]

    def _segment_index(self, s: float) -> int:
        # Containing segment: stations[i] <= s < stations[i+1]; the final
        # station maps onto the last segment.
        i = int(np.searchsorted(self.stations, s, side="right")) - 1
        return min(max(i, 0), len(self._seg_len) - 1)

    def point_at(self, s: float) -> np.ndarray:
        """Position at arc length ``s`` (no range check; internal use)."""
        i = self._segment_index(s)
        t = (s - self.stations[i]) / self._seg_len[i]
        return self.points[i] + t * self._seg_vec[i]

    def heading_at(self, s: float) -> float:
        i = self._segment_index(s)
        v = self._seg_vec[i]
        return math.atan2(v[1], v[0])

    def nearest_station(self, p) -> tuple[float, float]:
        """Project ``p`` onto the polyline: (station, distance) of the closest point."""
        q = np.asarray((p.x, p.y) if isinstance(p, Vec2) else p, dtype=float)
        rel = q - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg_vec) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        proj = self.points[:-1] + t[:, None] * self._seg_vec
        d2 = np.einsum("ij,ij->i", proj - q, proj - q)
        i = int(np.argmin(d2))
        station = float(self.stations[i] + t[i] * self._seg_len[i])
        return station, float(math.sqrt(d2[i]))

    def tail_from(self, s: float) -> np.ndarray:
        """Vertices of the remaining path from station ``s`` to the end."""
        s = min(max(s, 0.0), self.length)
        i = self._segment_index(s)
        head = self.point_at(s)
        rest = self.points[i + 1 :]
        if rest.size and np.hypot(*(rest[0] - head)) < 1e-12:
            return rest
        return np.vstack([head, rest])


@dataclass(frozen=True)
class CubicBezier:
    """Cubic Bezier curve defined by four control points."""

    p0: Vec2
    p1: Vec2
    p2: Vec2
    p3: Vec2

    def control_array(self) -> np.ndarray:
        return np.array(
            [[p.x, p.y] for p in (self.p0, self.p1, self.p2, self.p3)], dtype=float
        )


@dataclass(frozen=True)
class PathNoiseConfig:
    """Gaussian perturbation of the two interior Bezier anchors."""

    anchor_sigma: float = 1.0
    enabled: bool = False

    def __post_init__(self) -> None:
        if self.anchor_sigma < 0:
            raise ValueError("anchor_sigma must be >= 0")


@dataclass(frozen=True)
class LayoutEntry:
    approach_path: Polyline
    stop_station: float
    merged_path: Polyline

    @property
    def merge_point(self) -> np.ndarray:
        """Where the approach joins the circulating lane (last approach vertex)."""
        return self.approach_path.points[-1]

    def stop_pose(self) -> Pose:
        pos = self.approach_path.point_at(self.stop_station)
        return Pose(Vec2(float(pos[0]), float(pos[1])), self.approach_path.heading_at(self.stop_station))


class RoundaboutLayout:
    """Navigable polygons plus entry/circulation paths for one roundabout."""

    def __init__(
        self,
        name: str,
        navigable_polygons: Sequence[np.ndarray],
        entries: Sequence[LayoutEntry],
        circulation_paths: Sequence[Polyline],
    ) -> None:
        self.name = name
        self.navigable_polygons = [np.asarray(p, dtype=float) for p in navigable_polygons]
        for poly in self.navigable_polygons:
            poly.setflags(write=False)
        self.entries = list(entries)
        self.circulation_paths = list(circulation_paths)
        merges = np.array([e.merge_point for e in self.entries])
        self.ring_center = merges.mean(axis=0)
        self.ring_radius = float(
            np.max(np.hypot(*(merges - self.ring_center).T)) + RING_RADIUS_MARGIN
        )
        # Circulation routes grouped by the entry whose lane they start on.
        self._routes_by_entry: list[list[Polyline]] = [[] for _ in self.entries]
        for path in self.circulation_paths:
            for k, e in enumerate(self.entries):
                if np.hypot(*(path.points[0] - e.approach_path.points[0])) < 1e-6:
                    self._routes_by_entry[k].append(path)
                    break

    def routes_from_entry(self, entry_index: int) -> list[Polyline]:
        """Circulation routes whose first vertex coincides with the entry lane."""
        return list(self._routes_by_entry[entry_index])

    def inside_ring(self, p) -> bool:
        """True when ``p`` lies in the circulating region of the roundabout."""
        q = np.asarray((p.x, p.y) if isinstance(p, Vec2) else p, dtype=float)
        return bool(np.hypot(*(q - self.ring_center)) <= self.ring_radius)

    def stop_segment(self, entry_index: int, half_length: float = 2.3) -> tuple[np.ndarray, np.ndarray]:
        """The painted stop line: a segment across the lane at the stop station."""
        entry = self.entries[entry_index]
        pose = entry.stop_pose()
        c = pose.position.as_array()
        h = pose.heading
        lateral = np.array([math.sin(h), -math.cos(h)])
        return c - half_length * lateral, c + half_length * lateral


# ---------------------------------------------------------------------------
# operations


def station_to_pose(path: Polyline, s: float) -> Pose:
    """Pose (position + segment tangent heading) at arc length ``s``.

    Raises ValueError when ``s`` lies outside [0, length].
    """
    if not 0.0 <= s <= path.length + 1e-9:
        raise ValueError(f"station {s} outside [0, {path.length}]")
    s = min(s, path.length)
    p = path.point_at(s)
    return Pose(Vec2(float(p[0]), float(p[1])), path.heading_at(s))


def decasteljau_eval(curve: CubicBezier, t: float) -> Vec2:
    """Evaluate a cubic Bezier by three rounds of pairwise linear interpolation."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"curve parameter {t} outside [0, 1]")
    b = curve.control_array()
    for _ in range(3):
        b = (1.0 - t) * b[:-1] + t * b[1:]
    return Vec2(float(b[0, 0]), float(b[0, 1]))


def _decasteljau_many(ctrl: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Vectorised De Casteljau over an array of parameters -> (len(ts), 2)."""
    t = ts[:, None, None]
    b = np.broadcast_to(ctrl, (len(ts), 4, 2)).copy()
    for _ in range(3):
        b = (1.0 - t) * b[:, :-1] + t * b[:, 1:]
    return b[:, 0, :]


def bezier_resample(ctrl: np.ndarray, step: float) -> np.ndarray:
    """Points along a cubic Bezier at ~``step`` arc spacing, endpoints included.

    Spacing is measured along a dense piecewise-linear proxy of the curve, so
    it is accurate to well under ``step`` for the gentle curves used here.
    """
    ctrl = np.asarray(ctrl, dtype=float)
    poly_len = float(np.hypot(*np.diff(ctrl, axis=0).T).sum())
    n_fine = max(32, int(math.ceil(8.0 * poly_len / step)))
    fine = _decasteljau_many(ctrl, np.linspace(0.0, 1.0, n_fine))
    chord = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(fine, axis=0).T))))
    targets = np.arange(step, chord[-1], step)
    if targets.size and chord[-1] - targets[-1] < 0.25 * step:
        targets = targets[:-1]  # avoid a sliver segment before the endpoint
    mid = (
        np.column_stack(
            [np.interp(targets, chord, fine[:, 0]), np.interp(targets, chord, fine[:, 1])]
        )
        if targets.size
        else np.empty((0, 2))
    )
    return np.vstack([fine[0], mid, fine[-1]])


def densify(points: np.ndarray, max_gap: float) -> list[np.ndarray]:
    """Original vertices plus evenly spaced subdivisions so gaps <= max_gap."""
    out: list[np.ndarray] = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        gap = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(gap / max_gap)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return out


def perturb_path(
    path: Polyline,
    stop_station: float,
    cfg: PathNoiseConfig,
    rng: np.random.Generator,
    arc_step: float = BEZIER_ARC_STEP,
) -> Polyline:
    """Replace a random span of ``path`` around the stop line with a noisy Bezier.

    The span start is uniform in [0, stop_station], the span end uniform in
    [stop_station, length]; two interior anchors are sampled strictly between
    them and jittered with independent Gaussian noise of ``cfg.anchor_sigma``
    per coordinate.  Outside the span the original geometry is kept.
    """
    if stop_station <= 0.0 or stop_station >= path.length:
        raise ValueError(f"stop_station {stop_station} not inside path (len {path.length})")
    if not cfg.enabled:
        return path

    s_i = float(rng.uniform(0.0, stop_station))
    s_f = float(rng.uniform(stop_station, path.length))
    frac = np.sort(rng.uniform(0.0, 1.0, size=2))
    anchor_stations = s_i + frac * (s_f - s_i)

    p_i = path.point_at(s_i)
    p_f = path.point_at(s_f)
    anchors = [
        path.point_at(float(s)) + rng.normal(0.0, cfg.anchor_sigma, size=2)
        for s in anchor_stations
    ]
    ctrl = np.array([p_i, anchors[0], anchors[1], p_f])
    mid = bezier_resample(ctrl, arc_step)[1:-1]

    head = densify(np.asarray(_cut_until(path, s_i) + [p_i]), 2 * arc_step)
    tail = densify(np.asarray([p_f] + _cut_after(path, s_f)), 2 * arc_step)

    merged: list[np.ndarray] = []
    for p in [*head, *mid, *tail]:
        if merged and np.hypot(*(p - merged[-1])) < 1e-9:
            continue
        merged.append(np.asarray(p, dtype=float))
    return Polyline(merged)


def _cut_until(path: Polyline, s: float) -> list[np.ndarray]:
    """Vertices of ``path`` with station strictly below s (at least the first)."""
    keep = path.stations < s - 1e-12
    pts = path.points[keep]
    return [pts[i] for i in range(pts.shape[0])] or [path.points[0]]


def _cut_after(path: Polyline, s: float) -> list[np.ndarray]:
    keep = path.stations > s + 1e-12
    pts = path.points[keep]
    return [pts[i] for i in range(pts.shape[0])] or [path.points[-1]]


def _on_segment(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    scale = max(1.0, abs(bx - ax) + abs(by - ay))
    if abs(cross) > 1e-9 * scale:
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return -1e-9 <= dot <= (bx - ax) ** 2 + (by - ay) ** 2 + 1e-9


def polygon_contains(poly: np.ndarray, x: float, y: float) -> bool:
    """Even-odd containment test; points on the boundary count as inside."""
    n = poly.shape[0]
    inside = False
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if _on_segment(x, y, ax, ay, bx, by):
            return True
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
            if x_cross > x:
                inside = not inside
    return inside


def polygons_contain_many(polys: Sequence[np.ndarray], pts: np.ndarray) -> np.ndarray:
    """Vectorised union containment for raster sampling (no boundary handling)."""
    res = np.zeros(pts.shape[0], dtype=bool)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    for poly in polys:
        a = poly
        b = np.roll(poly, -1, axis=0)
        ay, by = a[:, 1][None, :], b[:, 1][None, :]
        ax, bx = a[:, 0][None, :], b[:, 0][None, :]
        cond = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
        crossings = (cond & (x_cross > x)).sum(axis=1)
        res |= crossings % 2 == 1
    return res


def point_in_navigable(layout: RoundaboutLayout, p: Vec2) -> bool:
    """True iff ``p`` lies inside (or on the boundary of) any navigable polygon."""
    return any(polygon_contains(poly, p.x, p.y) for poly in layout.navigable_polygons)


# ---------------------------------------------------------------------------
# layout documents


def _parse_polyline(raw, where: str) -> Polyline:
    try:
        return Polyline(raw)
    except (ValueError, TypeError) as exc:
        raise LayoutError(f"{where}: {exc}") from None


def load_layout(source) -> RoundaboutLayout:
    """Parse and validate a layout document (JSON text, bytes, or a dict)."""
    if isinstance(source, (bytes, str)):
        if not str(source).strip():
            raise LayoutError("empty layout document")
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise LayoutError(f"layout document is not valid JSON: {exc}") from None
    else:
        doc = source
    if not isinstance(doc, dict):
        raise LayoutError("layout document must be a JSON object")

    version = doc.get("schema_version")
    if version != LAYOUT_SCHEMA_VERSION:
        raise LayoutError(f"schema_version: expected {LAYOUT_SCHEMA_VERSION}, got {version!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise LayoutError("name: required non-empty string")

    raw_polys = doc.get("navigable_polygons")
    if not isinstance(raw_polys, list) or not raw_polys:
        raise LayoutError("navigable_polygons: required non-empty array")
    polygons = []
    for i, rp in enumerate(raw_polys):
        poly = np.asarray(rp, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise LayoutError(f"navigable_polygons[{i}]: need >= 3 [x, y] vertices")
        if not np.all(np.isfinite(poly)):
            raise LayoutError(f"navigable_polygons[{i}]: non-finite vertex")
        polygons.append(poly)

    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list) or not raw_entries:
        raise LayoutError("entries: required non-empty array")
    entries = []
    for i, re in enumerate(raw_entries):
        approach = _parse_polyline(re.get("approach"), f"entries[{i}].approach")
        merged = _parse_polyline(re.get("merged"), f"entries[{i}].merged")
        stop = re.get("stop_station")
        if not isinstance(stop, (int, float)) or not 0.0 < stop < approach.length:
            raise LayoutError(
                f"entries[{i}].stop_station: must lie strictly inside the approach "
                f"(0, {approach.length:.3f}), got {stop!r}"
            )
        entries.append(LayoutEntry(approach, float(stop), merged))

    raw_circ = doc.get("circulation")
    if not isinstance(raw_circ, list) or not raw_circ:
        raise LayoutError("circulation: required non-empty array")
    circulation = [_parse_polyline(rp, f"circulation[{i}]") for i, rp in enumerate(raw_circ)]

    layout = RoundaboutLayout(name, polygons, entries, circulation)

    paths = [(f"entries[{i}].approach", e.approach_path) for i, e in enumerate(entries)]
    paths += [(f"entries[{i}].merged", e.merged_path) for i, e in enumerate(entries)]
    paths += [(f"circulation[{i}]", p) for i, p in enumerate(circulation)]
    for where, path in paths:
        for j, pt in enumerate(path.points):
            if not point_in_navigable(layout, Vec2(float(pt[0]), float(pt[1]))):
                raise LayoutError(
                    f"{where}: vertex {j} at ({pt[0]:.3f}, {pt[1]:.3f}) "
                    "is outside every navigable polygon"
                )
    return layout


def layout_to_doc(layout: RoundaboutLayout) -> dict:
    """Serialize a layout back into the schema_version-1 document shape."""
    return {
        "schema_version": LAYOUT_SCHEMA_VERSION,
        "name": layout.name,
        "navigable_polygons": [p.tolist() for p in layout.navigable_polygons],
        "entries": [
            {
                "approach": e.approach_path.points.tolist(),
                "stop_station": e.stop_station,
                "merged": e.merged_path.points.tolist(),
            }
            for e in layout.entries
        ],
        "circulation": [p.points.tolist() for p in layout.circulation_paths],
    }
