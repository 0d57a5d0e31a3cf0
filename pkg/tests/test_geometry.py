"""Geometry tests: spline interpolation, validity constraints, projections."""

import numpy as np
import pytest

from roadsearch.geometry import (
    ControlPolyline,
    RoadSpec,
    SampledRoad,
    _circumradii,
    catmull_rom_sample,
    min_turn_radius,
    polyline_point_at,
    project_to_polyline,
    road_from_json,
    road_to_json,
    validate_road,
)

SPEC = RoadSpec()

# Control points of a large, gently curved self-crossing road ("alpha"
# shape from a 64 m arc with tangent tails).  Every turn radius stays above
# the 47 m threshold so the only violation is the crossing itself.
FIGURE_EIGHT = [
    [1.1, 118.4], [16.7, 102.8], [36.5, 83.0], [64.7, 54.7], [85.5, 40.9],
    [110.0, 36.0], [134.5, 40.9], [155.3, 54.7], [169.1, 75.5], [174.0, 100.0],
    [169.1, 124.5], [155.3, 145.3], [134.5, 159.1], [110.0, 164.0],
    [85.5, 159.1], [64.7, 145.3], [36.5, 117.0], [16.7, 97.2], [1.1, 81.6],
]


def straight_cp(y=100.0):
    return ControlPolyline(np.array([[10.0, y], [50.0, y], [150.0, y], [190.0, y]]))


def hairpin_cp(radius=20.0):
    ang = np.linspace(np.pi, 0.0, 7)
    return ControlPolyline(np.c_[100 + radius * np.cos(ang), 100 + radius * np.sin(ang)])


def random_walk_points(rng, n=None, bounds=(0.0, 200.0), margin=15.0):
    """Unvalidated polar-walk control points for property tests."""
    lo, hi = bounds
    n = n if n is not None else rng.integers(5, 13)
    for _ in range(200):
        pts = [rng.uniform(lo + margin, hi - margin, size=2)]
        heading = rng.uniform(0, 2 * np.pi)
        while len(pts) < n:
            for _ in range(30):
                cand_heading = heading + rng.uniform(-np.pi / 3, np.pi / 3)
                step = rng.uniform(25.0, 60.0)
                nxt = pts[-1] + step * np.array([np.cos(cand_heading), np.sin(cand_heading)])
                if np.all(nxt >= lo) and np.all(nxt <= hi):
                    pts.append(nxt)
                    heading = cand_heading
                    break
            else:
                break
        if len(pts) == n:
            return np.array(pts)
    raise AssertionError("could not generate a walk inside bounds")


class TestControlPolyline:
    def test_rejects_short(self):
        with pytest.raises(ValueError):
            ControlPolyline(np.zeros((3, 2)) + np.arange(3)[:, None])

    def test_rejects_out_of_bounds(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [250.0, 0.0]])
        with pytest.raises(ValueError):
            ControlPolyline(pts)

    def test_rejects_repeated_consecutive(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 0.0], [30.0, 0.0]])
        with pytest.raises(ValueError):
            ControlPolyline(pts)

    def test_points_are_immutable(self):
        cp = straight_cp()
        with pytest.raises(ValueError):
            cp.points[0, 0] = 5.0

    def test_equality_and_replace(self):
        a = straight_cp()
        assert a == straight_cp()
        b = a.replace_point(1, (51.0, 100.0))
        assert b != a
        assert b.points[1, 0] == 51.0


class TestCatmullRom:
    def test_collinear_points_stay_collinear(self):
        cp = ControlPolyline(np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0], [30.0, 0.0]]))
        road = catmull_rom_sample(cp, SPEC)
        assert np.all(road.samples[:, 1] == 0.0)

    def test_sample_count(self):
        cp = straight_cp()
        road = catmull_rom_sample(cp, SPEC)
        m, spp = len(cp), SPEC.samples_per_segment
        assert len(road.samples) == (m - 3) * (spp - 1) + 1

    def test_midpoint_matches_basis_oracle(self):
        # Independent oracle: evaluate the uniform Catmull-Rom basis matrix
        # at t = 0.5 for the one segment of this 4-point chromosome.
        p = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        basis = 0.5 * np.array(
            [[0.0, 2.0, 0.0, 0.0],
             [-1.0, 0.0, 1.0, 0.0],
             [2.0, -5.0, 4.0, -1.0],
             [-1.0, 3.0, -3.0, 1.0]]
        )
        t = 0.5
        oracle = np.array([1.0, t, t * t, t * t * t]) @ basis @ p
        assert oracle == pytest.approx([11.25, 5.0], abs=1e-12)

        cp = ControlPolyline(p, bounds=(-50.0, 50.0))
        road = catmull_rom_sample(cp, RoadSpec(samples_per_segment=11))
        mid = road.samples[5]
        assert mid == pytest.approx(oracle, abs=1e-12)
        assert mid == pytest.approx([11.25, 5.0], abs=1e-12)

    def test_interpolates_interior_control_points(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pts = random_walk_points(rng)
            cp = ControlPolyline(pts)
            road = catmull_rom_sample(cp, SPEC)
            for interior in pts[1:-1]:
                gap = np.min(np.hypot(*(road.samples - interior).T))
                assert gap < 1e-9

    def test_arc_lengths_strictly_increasing_from_zero(self):
        road = catmull_rom_sample(straight_cp(), SPEC)
        assert road.arc_lengths[0] == 0.0
        assert np.all(np.diff(road.arc_lengths) > 0)

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(11)
        pts = random_walk_points(rng)
        up = catmull_rom_sample(ControlPolyline(pts, bounds=(-250.0, 250.0)), SPEC)
        down = catmull_rom_sample(
            ControlPolyline(pts * np.array([1.0, -1.0]), bounds=(-250.0, 250.0)), SPEC
        )
        assert np.allclose(up.samples * np.array([1.0, -1.0]), down.samples, atol=1e-12)

    def test_locality_of_perturbation(self):
        rng = np.random.default_rng(13)
        pts = random_walk_points(rng, n=9)
        cp = ControlPolyline(pts)
        base = catmull_rom_sample(cp, SPEC)
        idx = 4
        moved = catmull_rom_sample(cp.replace_point(idx, pts[idx] + [3.0, -2.0]), SPEC)

        spp = SPEC.samples_per_segment
        changed_segments = set()
        for seg in range(len(pts) - 3):
            sl = slice(seg * (spp - 1), seg * (spp - 1) + spp)
            if not np.array_equal(base.samples[sl], moved.samples[sl]):
                changed_segments.add(seg)
        # Control point idx feeds segments idx-3 .. idx (0-based segment s
        # uses control points s .. s+3).
        assert changed_segments <= {idx - 3, idx - 2, idx - 1, idx}
        assert len(changed_segments) <= 4

    def test_rejects_too_few_points(self):
        cp = straight_cp()
        object.__setattr__(cp, "points", cp.points[:3])
        with pytest.raises(ValueError):
            catmull_rom_sample(cp, SPEC)


class TestValidity:
    def test_straight_road_is_valid(self):
        report = validate_road(catmull_rom_sample(straight_cp(), SPEC), SPEC)
        assert report.is_valid
        assert report.violations == ()

    def test_figure_eight_self_intersects(self):
        cp = ControlPolyline(np.array(FIGURE_EIGHT))
        report = validate_road(catmull_rom_sample(cp, SPEC), SPEC)
        assert not report.is_valid
        assert report.constraint_ids() == {"self_intersect"}

    def test_road_polygon_outside_map(self):
        # Centerline at y = 1 keeps control points inside bounds but pushes
        # the left road edge to y = -3.
        report = validate_road(catmull_rom_sample(straight_cp(y=1.0), SPEC), SPEC)
        assert not report.is_valid
        assert report.constraint_ids() == {"out_of_map"}

    def test_hairpin_below_min_radius(self):
        report = validate_road(catmull_rom_sample(hairpin_cp(20.0), SPEC), SPEC)
        assert not report.is_valid
        assert report.constraint_ids() == {"too_sharp"}

    def test_start_end_same(self):
        # Closed loop: the rendered road starts and ends on the same point.
        ang = np.linspace(0, 2 * np.pi, 13)[:-1]
        pts = np.c_[100 + 60 * np.cos(ang), 100 + 60 * np.sin(ang)]
        cp = ControlPolyline(np.vstack([pts[-1], pts, pts[0], pts[1]]))
        report = validate_road(catmull_rom_sample(cp, SPEC), SPEC)
        assert "start_end_same" in report.constraint_ids()

    def test_report_is_deterministic(self):
        road = catmull_rom_sample(ControlPolyline(np.array(FIGURE_EIGHT)), SPEC)
        assert validate_road(road, SPEC) == validate_road(road, SPEC)

    def test_is_valid_iff_no_violations(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            cp = ControlPolyline(random_walk_points(rng))
            report = validate_road(catmull_rom_sample(cp, SPEC), SPEC)
            assert report.is_valid == (len(report.violations) == 0)


class TestMinTurnRadius:
    def test_collinear_is_infinite(self):
        road = catmull_rom_sample(
            ControlPolyline(np.array([[0.0, 5.0], [10.0, 5.0], [20.0, 5.0], [30.0, 5.0]])),
            SPEC,
        )
        assert min_turn_radius(road) == np.inf

    def test_exact_circle_matches_circumradius_oracle(self):
        ang = np.linspace(0.0, np.pi, 100)
        circle = np.c_[100 + 50 * np.cos(ang), 100 + 50 * np.sin(ang)]
        radii = _circumradii(circle)
        assert np.max(np.abs(radii - 50.0)) / 50.0 < 1e-6

    def test_spline_through_circle_points_near_radius(self):
        ang = np.linspace(0.0, 1.5 * np.pi, 14)
        cp = ControlPolyline(np.c_[100 + 50 * np.cos(ang), 100 + 50 * np.sin(ang)])
        road = catmull_rom_sample(cp, SPEC)
        # Catmull-Rom wiggles slightly inside the circumscribed circle.
        assert min_turn_radius(road) == pytest.approx(50.0, abs=4.0)

    def test_right_angle_triple(self):
        assert _circumradii(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))[0] == \
            pytest.approx(np.sqrt(2) / 2, abs=1e-12)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(17)
        pts = random_walk_points(rng)
        road = catmull_rom_sample(ControlPolyline(pts), SPEC)
        base = min_turn_radius(road)

        theta = 0.7
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        moved_samples = road.samples @ rot.T + np.array([13.0, -4.5])
        moved = SampledRoad(
            samples=moved_samples,
            arc_lengths=road.arc_lengths,
            center_polyline_right_lane=road.center_polyline_right_lane,
            lane_polygon_right=road.lane_polygon_right,
            road_polygon=road.road_polygon,
            source=road.source,
        )
        assert min_turn_radius(moved) == pytest.approx(base, rel=1e-6)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            _circumradii(np.array([[0.0, 0.0], [1.0, 0.0]]))


class TestProjection:
    def test_point_on_polyline(self):
        line = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
        proj = project_to_polyline((10.0, 4.0), line)
        assert proj.distance == 0.0
        assert proj.arc_length == pytest.approx(14.0)

    def test_perpendicular_foot(self):
        proj = project_to_polyline((5.0, 3.0), np.array([[0.0, 0.0], [10.0, 0.0]]))
        assert proj.arc_length == pytest.approx(5.0)
        assert proj.distance == pytest.approx(3.0)

    def test_beyond_last_vertex_clamps(self):
        proj = project_to_polyline((15.0, 3.0), np.array([[0.0, 0.0], [10.0, 0.0]]))
        assert proj.arc_length == pytest.approx(10.0)
        assert proj.distance == pytest.approx(np.hypot(5.0, 3.0))

    def test_tie_breaks_to_smaller_arc(self):
        # Point equidistant from two parallel legs of a U.
        line = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 8.0], [0.0, 8.0]])
        proj = project_to_polyline((5.0, 4.0), line)
        assert proj.distance == pytest.approx(4.0)
        assert proj.arc_length == pytest.approx(5.0)

    def test_empty_polyline_rejected(self):
        with pytest.raises(ValueError):
            project_to_polyline((0.0, 0.0), np.zeros((1, 2)))

    def test_point_at_interpolates(self):
        line = np.array([[0.0, 0.0], [10.0, 0.0]])
        arcs = np.array([0.0, 10.0])
        assert polyline_point_at(line, arcs, 4.0) == pytest.approx([4.0, 0.0])
        assert polyline_point_at(line, arcs, 99.0) == pytest.approx([10.0, 0.0])
        assert polyline_point_at(line, arcs, -5.0) == pytest.approx([0.0, 0.0])


def test_road_json_round_trip():
    cp = straight_cp()
    data = road_to_json(cp, SPEC)
    assert set(data) == {"control_points", "samples_per_segment", "lane_width", "map_size"}
    cp2, spec2 = road_from_json(data)
    assert cp2 == cp
    assert spec2.lane_width == SPEC.lane_width
    assert spec2.map_size == SPEC.map_size
