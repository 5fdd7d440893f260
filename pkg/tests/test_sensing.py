import math

import numpy as np
import pytest

from hyperrace.geom import Box2
from hyperrace.reach import KinematicObstacle, compute_reachtube
from hyperrace.sensing import (
    LidarConfig,
    LidarScan,
    ObservableSet,
    augment_with_reach,
    observable_static,
    rdp_simplify,
    scan,
    scan_to_points,
)
from hyperrace.world import raycast

from test_world import empty_room_scenario_obj


class TestScan:
    def test_beam_indexing_in_square_room(self):
        # M=4, fov = 3*pi/2 -> offsets {-3pi/4, -pi/4, pi/4, 3pi/4};
        # the forward beam (absolute angle 0) is absent
        sc = empty_room_scenario_obj()
        cfg = LidarConfig(beams=4, fov=1.5 * math.pi, max_range=30.0)
        out = scan(((0.0, 0.0), 0.0), sc, cfg)
        assert np.allclose(
            out.offsets, [-0.75 * math.pi, -0.25 * math.pi, 0.25 * math.pi, 0.75 * math.pi]
        )
        # oracle: one raycast per beam
        for off, r in zip(out.offsets, out.ranges):
            assert r == pytest.approx(raycast((0.0, 0.0), off, sc, 30.0), abs=1e-12)
        assert np.all(np.diff(out.offsets) > 0)  # anti-clockwise ordering

    def test_all_free_is_sentinel(self):
        sc = empty_room_scenario_obj()
        cfg = LidarConfig(beams=16, fov=math.pi, max_range=2.0)
        out = scan(((0.0, 0.0), 0.0), sc, cfg)
        assert np.all(out.ranges == 2.0)

    def test_wall_ahead(self):
        sc = empty_room_scenario_obj()
        cfg = LidarConfig(beams=3, fov=math.pi / 2, max_range=30.0)
        out = scan(((3.0, 0.0), 0.0), sc, cfg)  # wall at x=5, 2 m ahead
        center = out.ranges[1]
        assert center == pytest.approx(2.0, abs=1e-9)

    def test_points_lie_on_geometry(self):
        sc = empty_room_scenario_obj()
        cfg = LidarConfig(beams=90, fov=1.5 * math.pi, max_range=30.0)
        s = scan(((1.0, -2.0), 0.7), sc, cfg)
        pts = scan_to_points(s)
        seg_a, seg_b = sc.segments
        d = seg_b - seg_a
        for p in pts:
            w = p[None, :] - seg_a
            t = np.clip((w * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
            proj = seg_a + t[:, None] * d
            assert np.linalg.norm(p[None, :] - proj, axis=1).min() < 1e-6


class TestScanToPoints:
    def test_unit_polar_conversion(self):
        s = LidarScan(
            ranges=np.array([1.0]),
            pose=((2.0, 3.0), 0.0),
            offsets=np.array([math.pi / 2]),
            max_range=10.0,
        )
        pts = scan_to_points(s)
        assert pts.shape == (1, 2)
        assert pts[0] == pytest.approx([2.0, 4.0])

    def test_max_range_dropped(self):
        s = LidarScan(
            ranges=np.array([1.0, 10.0]),
            pose=((0.0, 0.0), 0.0),
            offsets=np.array([0.0, 0.1]),
            max_range=10.0,
        )
        assert scan_to_points(s).shape == (1, 2)

    def test_heading_rotation(self):
        s = LidarScan(
            ranges=np.array([2.0]),
            pose=((0.0, 0.0), math.pi),
            offsets=np.array([0.0]),
            max_range=10.0,
        )
        assert scan_to_points(s)[0] == pytest.approx([-2.0, 0.0], abs=1e-12)


def point_to_polyline_dist(p, poly):
    a = poly[:-1]
    b = poly[1:]
    d = b - a
    w = p[None, :] - a
    denom = (d * d).sum(1)
    t = np.clip(np.divide(dot := (w * d).sum(1), denom, where=denom > 0,
                          out=np.zeros_like(dot)), 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.linalg.norm(p[None, :] - proj, axis=1).min()


class TestRdpSimplify:
    def test_collinear_drops_middle(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        out = rdp_simplify(pts, 0.01)
        assert out.shape == (2, 2)
        assert np.allclose(out, [[0, 0], [2, 0]])

    def test_keeps_deviating_middle(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
        out = rdp_simplify(pts, 0.5)
        assert out.shape == (3, 2)

    def test_epsilon_zero_is_identity(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(40, 2))
        out = rdp_simplify(pts, 0.0)
        assert np.array_equal(out, pts)

    def test_subsequence_and_error_bound(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            n = int(rng.integers(2, 60))
            pts = np.cumsum(rng.normal(scale=0.5, size=(n, 2)), axis=0)
            eps = float(rng.uniform(0.0, 1.0))
            out = rdp_simplify(pts, eps)
            # subsequence check
            idx = 0
            for p in out:
                while idx < n and not np.array_equal(pts[idx], p):
                    idx += 1
                assert idx < n, "output is not a subsequence of the input"
                idx += 1
            # dropped points within eps of the simplified polyline
            if eps > 0 and out.shape[0] >= 2:
                for p in pts:
                    assert point_to_polyline_dist(p, out) <= eps + 1e-9


class TestObservable:
    def test_filters_by_distance(self):
        pts = np.array([[1.0, 0.0], [100.0, 0.0]])
        q = observable_static(pts, (0.0, 0.0), 5.0)
        assert q.points.shape == (1, 2)

    def test_boundary_distance_kept(self):
        pts = np.array([[5.0, 0.0]])
        q = observable_static(pts, (0.0, 0.0), 5.0)
        assert q.points.shape == (1, 2)

    def test_large_d_is_identity(self):
        pts = np.random.default_rng(1).uniform(-3, 3, size=(20, 2))
        q = observable_static(pts, (0.0, 0.0), 100.0)
        assert np.array_equal(q.points, pts)

    def test_idempotent_and_subset(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-10, 10, size=(50, 2))
        q1 = observable_static(pts, (0.0, 0.0), 6.0)
        q2 = observable_static(q1.points, (0.0, 0.0), 6.0)
        assert np.array_equal(q1.points, q2.points)
        as_set = {tuple(p) for p in pts}
        assert all(tuple(p) in as_set for p in q1.points)


def tube_at(center, extent=0.1):
    box = Box2.from_arrays(
        (center[0] - extent, center[1] - extent),
        (center[0] + extent, center[1] + extent),
    )
    obs = KinematicObstacle(box, Box2.from_arrays((0.0, 0.0), (0.0, 0.0)))
    return compute_reachtube(obs, horizon=0.5, steps=4)


class TestAugmentWithReach:
    def test_inclusion(self):
        q = ObservableSet(np.zeros((0, 2)), 5.0)
        tube = tube_at((1.0, 1.0))
        out = augment_with_reach(q, [tube], (0.0, 0.0), 5.0)
        assert out.points.shape == (4 * len(tube.steps), 2)

    def test_exclusion(self):
        q = ObservableSet(np.array([[0.5, 0.5]]), 5.0)
        tube = tube_at((20.0, 0.0))
        out = augment_with_reach(q, [tube], (0.0, 0.0), 5.0)
        assert np.array_equal(out.points, q.points)

    def test_empty_tube_list_is_identity(self):
        q = ObservableSet(np.array([[0.5, 0.5]]), 5.0)
        out = augment_with_reach(q, [], (0.0, 0.0), 5.0)
        assert np.array_equal(out.points, q.points)

    def test_superset_cardinality(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = rng.uniform(-4, 4, size=(int(rng.integers(0, 10)), 2))
            q = ObservableSet(pts, 5.0)
            tubes = [tube_at(rng.uniform(-8, 8, 2)) for _ in range(3)]
            out = augment_with_reach(q, tubes, (0.0, 0.0), 5.0)
            assert out.points.shape[0] >= q.points.shape[0]
