"""Built-in roundabout layouts and the parametric generator behind them.

Two layouts ship with the package: ``ring3`` (three entries, the training
ground) and ``ring4`` (four entries with a wider ring, held out for
evaluation on unfamiliar geometry).  Both are produced by
:func:`build_ring_doc` and frozen as JSON assets so external tools read the
same documents the simulator uses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import (
    LAYOUT_SCHEMA_VERSION,
    RoundaboutLayout,
    bezier_resample,
    densify,
    load_layout,
)

TRAINING_LAYOUT = "ring3"
UNSEEN_LAYOUT = "ring4"
LAYOUT_ALIASES = {"training": TRAINING_LAYOUT, "unseen": UNSEEN_LAYOUT}

STRAIGHT_STEP = 2.0  # vertex spacing on straight lane sections
CURVE_STEP = 0.5  # vertex spacing on blends and ring arcs


@dataclass(frozen=True)
class RingSpec:
    """Parameters of a symmetric n-entry roundabout.

    Angles are degrees counterclockwise from +x; distances are metres.
    Traffic keeps right and circulates counterclockwise, so lanes sit
    ``lane_offset`` to the right of the direction of travel.
    """

    name: str
    entry_angles_deg: tuple[float, ...]
    ring_radius: float  # circulating lane centreline
    annulus: tuple[float, float]  # navigable ring band (inner, outer)
    road_span: tuple[float, float]  # radial extent of each entry road
    road_half_width: float
    lane_offset: float
    approach_start: float  # radius where approaches begin
    blend_start: float  # radius where the entry blend leaves the straight
    merge_lead_deg: float  # ring angle past the road where entries merge
    exit_lead_deg: float  # ring angle before the road where exits depart
    control_offset: float  # Bezier control-point distance for blends
    exit_skip: int  # the through route leaves at entry (i + exit_skip) % n


RING3 = RingSpec(
    name="ring3",
    entry_angles_deg=(90.0, 210.0, 330.0),
    ring_radius=11.0,
    annulus=(8.0, 14.0),
    road_span=(12.5, 45.0),
    road_half_width=4.6,
    lane_offset=2.25,
    approach_start=42.0,
    blend_start=15.5,
    merge_lead_deg=50.0,
    exit_lead_deg=45.0,
    control_offset=4.0,
    exit_skip=2,
)

RING4 = RingSpec(
    name="ring4",
    entry_angles_deg=(45.0, 135.0, 225.0, 315.0),
    ring_radius=16.0,
    annulus=(13.0, 19.0),
    road_span=(17.5, 50.0),
    road_half_width=4.6,
    lane_offset=2.25,
    approach_start=47.0,
    blend_start=20.5,
    merge_lead_deg=35.0,
    exit_lead_deg=40.0,
    control_offset=4.0,
    exit_skip=2,
)

_SPECS = {RING3.name: RING3, RING4.name: RING4}


def _unit(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def _ring_point(spec: RingSpec, phi_deg: float) -> np.ndarray:
    return spec.ring_radius * _unit(phi_deg)


def _ring_tangent(phi_deg: float) -> np.ndarray:
    a = math.radians(phi_deg)
    return np.array([-math.sin(a), math.cos(a)])


def _arc_points(radius: float, a_deg: float, b_deg: float, step: float) -> np.ndarray:
    """Counterclockwise arc from a to b sampled at <= step arc spacing."""
    a, b = math.radians(a_deg), math.radians(b_deg)
    while b <= a:
        b += 2.0 * math.pi
    n = max(2, int(math.ceil(radius * (b - a) / step)) + 1)
    ts = np.linspace(a, b, n)
    return radius * np.column_stack([np.cos(ts), np.sin(ts)])


def _dedupe(chunks: list[np.ndarray]) -> list[list[float]]:
    out: list[np.ndarray] = []
    for chunk in chunks:
        for p in np.atleast_2d(np.asarray(chunk, dtype=float)):
            if out and math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) < 1e-9:
                continue
            out.append(p)
    return [[float(p[0]), float(p[1])] for p in out]


def _approach_chunks(spec: RingSpec, i: int) -> list[np.ndarray]:
    """Straight inbound lane plus the blend onto the ring, as point chunks."""
    theta = spec.entry_angles_deg[i]
    u = _unit(theta)
    inbound = -u
    right = np.array([inbound[1], -inbound[0]])
    off = spec.lane_offset * right

    start = spec.approach_start * u + off
    knee = spec.blend_start * u + off
    straight = np.asarray(densify(np.array([start, knee]), STRAIGHT_STEP))

    phi_in = theta + spec.merge_lead_deg
    p3 = _ring_point(spec, phi_in)
    ctrl = np.array(
        [
            knee,
            knee + spec.control_offset * inbound,
            p3 - spec.control_offset * _ring_tangent(phi_in),
            p3,
        ]
    )
    return [straight, bezier_resample(ctrl, CURVE_STEP)]


def _exit_chunks(spec: RingSpec, j: int) -> list[np.ndarray]:
    """Blend off the ring onto entry j's outbound lane, then the straight."""
    theta = spec.entry_angles_deg[j]
    u = _unit(theta)
    right = np.array([u[1], -u[0]])
    off = spec.lane_offset * right

    phi_out = theta - spec.exit_lead_deg
    p0 = _ring_point(spec, phi_out)
    knee = spec.blend_start * u + off
    end = spec.approach_start * u + off
    ctrl = np.array(
        [
            p0,
            p0 + spec.control_offset * _ring_tangent(phi_out),
            knee - spec.control_offset * u,
            knee,
        ]
    )
    straight = np.asarray(densify(np.array([knee, end]), STRAIGHT_STEP))
    return [bezier_resample(ctrl, CURVE_STEP), straight]


def _route_points(spec: RingSpec, i: int, j: int) -> list[list[float]]:
    """Full lane path entering at road i and leaving at road j."""
    phi_in = spec.entry_angles_deg[i] + spec.merge_lead_deg
    phi_out = spec.entry_angles_deg[j] - spec.exit_lead_deg
    arc = _arc_points(spec.ring_radius, phi_in, phi_out, CURVE_STEP)
    return _dedupe([*_approach_chunks(spec, i), arc, *_exit_chunks(spec, j)])


def _road_polygon(spec: RingSpec, theta: float) -> list[list[float]]:
    u = _unit(theta)
    perp = np.array([-u[1], u[0]])
    r0, r1 = spec.road_span
    hw = spec.road_half_width
    corners = [
        r0 * u + hw * perp,
        r1 * u + hw * perp,
        r1 * u - hw * perp,
        r0 * u - hw * perp,
    ]
    return [[float(c[0]), float(c[1])] for c in corners]


def _wedge_polygons(spec: RingSpec) -> list[list[list[float]]]:
    """The ring band split into simple annular wedges between the roads."""
    angles = sorted(spec.entry_angles_deg)
    n = len(angles)
    mids = [(angles[k] + angles[(k + 1) % n] + (360.0 if k == n - 1 else 0.0)) / 2.0 for k in range(n)]
    inner_r, outer_r = spec.annulus
    polys = []
    for k in range(n):
        a, b = mids[k], mids[(k + 1) % n]
        outer = _arc_points(outer_r, a, b, 1.0)
        inner = _arc_points(inner_r, a, b, 1.0)[::-1]
        polys.append([[float(p[0]), float(p[1])] for p in np.vstack([outer, inner])])
    return polys


def build_ring_doc(spec: RingSpec) -> dict:
    """Generate the layout document for a ring specification."""
    n = len(spec.entry_angles_deg)
    polygons = [_road_polygon(spec, th) for th in spec.entry_angles_deg] + _wedge_polygons(spec)

    entries = []
    for i in range(n):
        approach = _dedupe(_approach_chunks(spec, i))
        merged = _route_points(spec, i, (i + spec.exit_skip) % n)
        # 1 m before the blend knee; exactly at the knee the lane heading
        # is discontinuous and the stop line's orientation ill-defined.
        stop_station = spec.approach_start - spec.blend_start - 1.0
        entries.append(
            {"approach": approach, "stop_station": stop_station, "merged": merged}
        )

    circulation = [
        _route_points(spec, i, j) for i in range(n) for j in range(n) if j != i
    ]
    return {
        "schema_version": LAYOUT_SCHEMA_VERSION,
        "name": spec.name,
        "navigable_polygons": polygons,
        "entries": entries,
        "circulation": circulation,
    }


def bundled_layout_names() -> list[str]:
    return sorted(_SPECS)


def bundled_layout(name: str) -> RoundaboutLayout:
    """Load one of the layouts shipped with the package."""
    key = LAYOUT_ALIASES.get(name, name)
    if key not in _SPECS:
        known = ", ".join(sorted([*_SPECS, *LAYOUT_ALIASES]))
        raise KeyError(f"unknown layout {name!r} (known: {known})")
    text = resources.files(__package__).joinpath("assets", f"{key}.json").read_text()
    return load_layout(text)


def resolve_layout(name_or_path: str) -> RoundaboutLayout:
    """Accept a bundled layout name, an alias, or a path to a layout JSON file."""
    key = LAYOUT_ALIASES.get(name_or_path, name_or_path)
    if key in _SPECS:
        return bundled_layout(key)
    path = Path(name_or_path)
    if path.exists():
        return load_layout(path.read_text())
    raise FileNotFoundError(
        f"{name_or_path!r} is neither a bundled layout "
        f"({', '.join([*bundled_layout_names(), *LAYOUT_ALIASES])}) nor a file"
    )


def write_assets(out_dir: str | Path) -> list[Path]:
    """Regenerate the bundled layout JSON files (used at development time)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in _SPECS.values():
        doc = build_ring_doc(spec)
        load_layout(doc)  # refuse to write an invalid asset
        path = out / f"{spec.name}.json"
        path.write_text(json.dumps(doc) + "\n")
        written.append(path)
    return written
