import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roundabout_rl.geometry import (
    CubicBezier,
    LayoutError,
    PathNoiseConfig,
    Polyline,
    Vec2,
    bezier_resample,
    decasteljau_eval,
    densify,
    layout_to_doc,
    load_layout,
    perturb_path,
    point_in_navigable,
    polygon_contains,
    polygons_contain_many,
    station_to_pose,
)


def bernstein_point(curve: CubicBezier, t: float) -> np.ndarray:
    """Independent Bezier evaluation from the Bernstein basis polynomials."""
    pts = curve.control_array()
    coeff = np.array(
        [(1 - t) ** 3, 3 * (1 - t) ** 2 * t, 3 * (1 - t) * t**2, t**3]
    )
    return coeff @ pts


def ray_cast_contains(poly: np.ndarray, x: float, y: float) -> bool:
    """Reference even-odd test: count edge crossings of a +x ray, loop form."""
    crossings = 0
    n = len(poly)
    for i in range(n):
        (ax, ay), (bx, by) = poly[i], poly[(i + 1) % n]
        if (ay <= y < by) or (by <= y < ay):
            if ax + (y - ay) / (by - ay) * (bx - ax) > x:
                crossings += 1
    return crossings % 2 == 1


L_PATH = Polyline([(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)])


class TestPolyline:
    def test_stations_accumulate_arc_length(self):
        assert L_PATH.length == pytest.approx(20.0)
        assert list(L_PATH.stations) == pytest.approx([0.0, 10.0, 20.0])

    def test_pose_mid_second_segment(self):
        pose = station_to_pose(L_PATH, 15.0)
        assert (pose.position.x, pose.position.y) == pytest.approx((10.0, 5.0))
        assert pose.heading == pytest.approx(math.pi / 2)

    def test_pose_at_ends(self):
        p0 = station_to_pose(L_PATH, 0.0)
        assert (p0.position.x, p0.position.y) == pytest.approx((0.0, 0.0))
        assert p0.heading == pytest.approx(0.0)
        p1 = station_to_pose(L_PATH, 20.0)
        assert (p1.position.x, p1.position.y) == pytest.approx((10.0, 10.0))

    @pytest.mark.parametrize("s", [-0.001, 20.1, 1e9])
    def test_pose_out_of_range_rejected(self, s):
        with pytest.raises(ValueError):
            station_to_pose(L_PATH, s)

    def test_degenerate_points_rejected(self):
        with pytest.raises(ValueError):
            Polyline([(0, 0), (0, 0), (1, 1)])
        with pytest.raises(ValueError):
            Polyline([(0, 0)])

    @given(st.floats(0.0, 20.0))
    def test_projection_recovers_station(self, s):
        p = L_PATH.point_at(s)
        station, dist = L_PATH.nearest_station(p)
        assert dist == pytest.approx(0.0, abs=1e-9)
        assert station == pytest.approx(s, abs=1e-9)

    def test_projection_of_offset_point(self):
        station, dist = L_PATH.nearest_station((4.0, 3.0))
        assert station == pytest.approx(4.0)
        assert dist == pytest.approx(3.0)

    def test_tail_from_midpoint(self):
        tail = L_PATH.tail_from(15.0)
        assert tail[0] == pytest.approx([10.0, 5.0])
        assert tail[-1] == pytest.approx([10.0, 10.0])


class TestBezier:
    @given(
        st.lists(st.floats(-50, 50), min_size=8, max_size=8),
        st.floats(0.0, 1.0),
    )
    def test_de_casteljau_matches_bernstein_form(self, coords, t):
        pts = [Vec2(coords[k], coords[k + 1]) for k in range(0, 8, 2)]
        curve = CubicBezier(*pts)
        got = decasteljau_eval(curve, t)
        want = bernstein_point(curve, t)
        assert got.x == pytest.approx(want[0], abs=1e-9)
        assert got.y == pytest.approx(want[1], abs=1e-9)

    def test_parameter_out_of_range_rejected(self):
        curve = CubicBezier(Vec2(0, 0), Vec2(1, 0), Vec2(2, 0), Vec2(3, 0))
        with pytest.raises(ValueError):
            decasteljau_eval(curve, 1.5)

    def test_resample_spacing_and_endpoints(self):
        ctrl = np.array([[0.0, 0.0], [5.0, 8.0], [12.0, 8.0], [18.0, 0.0]])
        pts = bezier_resample(ctrl, 0.5)
        assert pts[0] == pytest.approx([0.0, 0.0])
        assert pts[-1] == pytest.approx([18.0, 0.0])
        gaps = np.hypot(*np.diff(pts, axis=0).T)
        assert gaps.max() <= 0.5 * 1.3
        assert gaps.min() > 0.0

    def test_resample_of_collinear_controls_stays_on_line(self):
        ctrl = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [6.0, 6.0]])
        pts = bezier_resample(ctrl, 0.25)
        assert np.abs(pts[:, 0] - pts[:, 1]).max() < 1e-9


class TestDensify:
    @given(st.integers(2, 6), st.floats(0.3, 4.0))
    @settings(max_examples=30)
    def test_gaps_bounded_and_vertices_kept(self, n, max_gap):
        rng = np.random.default_rng(n * 1000 + int(max_gap * 10))
        pts = np.cumsum(rng.uniform(0.5, 9.0, size=(n, 2)), axis=0)
        out = np.asarray(densify(pts, max_gap))
        gaps = np.hypot(*np.diff(out, axis=0).T)
        assert gaps.max() <= max_gap + 1e-9
        for p in pts:
            assert np.min(np.hypot(*(out - p).T)) < 1e-9


SQUARE = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])
CONCAVE = np.array([[0, 0], [6, 0], [6, 6], [3, 6], [3, 3], [0, 3]], dtype=float)


class TestPolygonContainment:
    @pytest.mark.parametrize(
        "x,y,want",
        [
            (2.0, 2.0, True),
            (5.0, 2.0, False),
            (-0.1, 2.0, False),
            (0.0, 2.0, True),  # on the left edge
            (4.0, 4.0, True),  # on a corner
            (2.0, 0.0, True),  # on the bottom edge
        ],
    )
    def test_square_cases(self, x, y, want):
        assert polygon_contains(SQUARE, x, y) is want

    def test_concave_notch_excluded(self):
        assert polygon_contains(CONCAVE, 1.5, 1.5)
        assert polygon_contains(CONCAVE, 4.5, 4.5)
        assert not polygon_contains(CONCAVE, 1.5, 4.5)

    @given(st.floats(-2, 8), st.floats(-2, 8))
    def test_matches_reference_ray_cast(self, x, y):
        # Skip points within a hair of an edge: the implementations may
        # disagree there by design (ours counts the boundary as inside).
        for poly in (SQUARE, CONCAVE):
            rel = np.hypot(poly[:, 0] - x, poly[:, 1] - y)
            near_edge = any(
                abs((bx - ax) * (y - ay) - (by - ay) * (x - ax)) < 1e-6
                for (ax, ay), (bx, by) in zip(poly, np.roll(poly, -1, axis=0))
            )
            if near_edge or rel.min() < 1e-6:
                continue
            assert polygon_contains(poly, x, y) == ray_cast_contains(poly, x, y)

    def test_vectorised_matches_scalar_off_boundary(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-2, 8, size=(500, 2))
        got = polygons_contain_many([SQUARE, CONCAVE], pts)
        for (x, y), g in zip(pts, got):
            want = polygon_contains(SQUARE, x, y) or polygon_contains(CONCAVE, x, y)
            assert g == want


STRAIGHT = Polyline(densify(np.array([[0.0, 0.0], [60.0, 0.0]]), 2.0))


class TestPerturbPath:
    def test_disabled_returns_same_object(self):
        cfg = PathNoiseConfig(anchor_sigma=1.0, enabled=False)
        rng = np.random.default_rng(0)
        assert perturb_path(STRAIGHT, 30.0, cfg, rng) is STRAIGHT

    def test_zero_noise_straight_line_stays_straight(self):
        cfg = PathNoiseConfig(anchor_sigma=0.0, enabled=True)
        for seed in range(50):
            out = perturb_path(STRAIGHT, 30.0, cfg, np.random.default_rng(seed))
            assert np.abs(out.points[:, 1]).max() < 1e-9
            assert out.length == pytest.approx(60.0, abs=1e-6)

    def test_endpoints_preserved_and_gaps_bounded(self):
        cfg = PathNoiseConfig(anchor_sigma=1.5, enabled=True)
        for seed in range(200):
            out = perturb_path(STRAIGHT, 30.0, cfg, np.random.default_rng(seed))
            assert out.points[0] == pytest.approx(STRAIGHT.points[0], abs=1e-12)
            assert out.points[-1] == pytest.approx(STRAIGHT.points[-1], abs=1e-12)
            gaps = np.hypot(*np.diff(out.points, axis=0).T)
            assert gaps.max() <= 2.0 + 1e-6

    def test_span_brackets_the_stop_station(self):
        # The implementation draws the span bounds first: start uniform in
        # [0, stop], end uniform in [stop, length].  Replaying the draws
        # pins down where the spliced curve must begin and end.
        cfg = PathNoiseConfig(anchor_sigma=1.0, enabled=True)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            out = perturb_path(STRAIGHT, 30.0, cfg, np.random.default_rng(seed))
            s_i = rng.uniform(0.0, 30.0)
            s_f = rng.uniform(30.0, STRAIGHT.length)
            assert 0.0 <= s_i <= 30.0 <= s_f <= STRAIGHT.length
            for s in (s_i, s_f):
                anchor = STRAIGHT.point_at(s)
                d = np.hypot(*(out.points - anchor).T).min()
                assert d < 1e-9, f"seed {seed}: splice point at station {s} missing"

    def test_noise_actually_moves_the_path(self):
        cfg = PathNoiseConfig(anchor_sigma=2.0, enabled=True)
        moved = 0
        for seed in range(20):
            out = perturb_path(STRAIGHT, 30.0, cfg, np.random.default_rng(seed))
            if np.abs(out.points[:, 1]).max() > 0.05:
                moved += 1
        assert moved >= 18

    def test_stop_station_outside_path_rejected(self):
        cfg = PathNoiseConfig(enabled=True)
        with pytest.raises(ValueError):
            perturb_path(STRAIGHT, 0.0, cfg, np.random.default_rng(0))
        with pytest.raises(ValueError):
            perturb_path(STRAIGHT, 60.0, cfg, np.random.default_rng(0))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            PathNoiseConfig(anchor_sigma=-0.1)


def tiny_layout_doc() -> dict:
    return {
        "schema_version": 1,
        "name": "tiny",
        "navigable_polygons": [[[-5, -5], [45, -5], [45, 45], [-5, 45]]],
        "entries": [
            {
                "approach": [[0, 0], [20, 0]],
                "stop_station": 12.0,
                "merged": [[0, 0], [20, 0], [40, 20]],
            }
        ],
        "circulation": [[[0, 0], [20, 0], [20, 40]]],
    }


class TestLayoutDocuments:
    def test_round_trip_preserves_numbers(self):
        layout = load_layout(tiny_layout_doc())
        doc = layout_to_doc(layout)
        again = load_layout(doc)
        assert again.name == "tiny"
        assert again.entries[0].stop_station == 12.0
        np.testing.assert_allclose(
            again.entries[0].merged_path.points, layout.entries[0].merged_path.points
        )

    def test_loads_from_json_text(self):
        import json

        layout = load_layout(json.dumps(tiny_layout_doc()))
        assert layout.entries[0].approach_path.length == pytest.approx(20.0)

    @pytest.mark.parametrize(
        "mutate,needle",
        [
            (lambda d: d.update(schema_version=2), "schema_version"),
            (lambda d: d.update(name=""), "name"),
            (lambda d: d.update(navigable_polygons=[]), "navigable_polygons"),
            (lambda d: d["navigable_polygons"].append([[0, 0], [1, 1]]), "navigable_polygons[1]"),
            (lambda d: d["entries"][0].update(stop_station=99.0), "stop_station"),
            (lambda d: d["entries"][0].update(stop_station=0.0), "stop_station"),
            (lambda d: d.update(entries=[]), "entries"),
            (lambda d: d.update(circulation=[]), "circulation"),
        ],
    )
    def test_schema_violations_name_the_field(self, mutate, needle):
        doc = tiny_layout_doc()
        mutate(doc)
        with pytest.raises(LayoutError, match=needle.replace("[", "\\[")):
            load_layout(doc)

    def test_path_escaping_navigable_area_rejected(self):
        doc = tiny_layout_doc()
        doc["circulation"][0][-1] = [20, 400]
        with pytest.raises(LayoutError, match="circulation\\[0\\]"):
            load_layout(doc)

    def test_not_json_rejected(self):
        with pytest.raises(LayoutError):
            load_layout("not json at all {")
        with pytest.raises(LayoutError):
            load_layout("")

    def test_point_in_navigable_union(self):
        layout = load_layout(tiny_layout_doc())
        assert point_in_navigable(layout, Vec2(0.0, 0.0))
        assert not point_in_navigable(layout, Vec2(100.0, 0.0))
