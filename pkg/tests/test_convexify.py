import math

import numpy as np
import pytest

from conftest import random_separation_problem
from hyperrace.control import footprint_corners
from hyperrace.convexify import (
    EUCLIDEAN_SUM,
    HAUSDORFF_MAX,
    OBJECTIVES,
    SATISFIABILITY,
    SafeRegion,
    SeparationProblem,
    inscribed_radius_quality,
    mpcc_corridor,
    separate_bilevel,
    separate_constrained,
    verify_separation,
)
from hyperrace.errors import Infeasible
from hyperrace.geom import KEEP_LE, Hyperplane, Point2, Polyhedron
from hyperrace.sensing import ObservableSet
from hyperrace.world import Track


def problem(points, target, n_planes=2, margin=0.05, d=5.0, ego_heading=0.0):
    return SeparationProblem(
        obstacles=ObservableSet(np.asarray(points, float).reshape(-1, 2), d),
        ego_corners=footprint_corners(0.0, 0.0, ego_heading, 0.3, 0.3),
        target=Point2(*target),
        n_planes=n_planes,
        margin=margin,
    )


def wall_problem():
    xs = np.linspace(-1.0, 3.0, 20)
    walls = np.vstack(
        [np.column_stack([xs, np.ones_like(xs)]),
         np.column_stack([xs, -np.ones_like(xs)])]
    )
    return problem(walls, (3.0, 0.0))


class TestSeparateConstrained:
    def test_single_point_one_plane(self):
        p = problem([[2.0, 0.0]], (1.0, 0.0), n_planes=1)
        region = separate_constrained(p, SATISFIABILITY)
        assert len(region.planes) == 1
        assert verify_separation(region, p)
        h = region.planes[0]
        assert h.signed_distance((2.0, 0.0)) >= p.margin - 1e-9

    @pytest.mark.parametrize("objective", OBJECTIVES)
    def test_parallel_walls(self, objective):
        # optimum inscribed radius is 1 - margin = 0.95 (planes can sit at
        # |y| = 1 - margin at best); the methods should land in [0.8, 1.0]
        p = wall_problem()
        region = separate_constrained(p, objective)
        assert verify_separation(region, p)
        assert len(region.planes) == 2
        r = inscribed_radius_quality(region, p.ego_center, p.target)
        assert 0.8 <= r <= 1.0

    def test_enclosing_ring_infeasible(self):
        ang = np.linspace(0, 2 * math.pi, 72, endpoint=False)
        ring = np.column_stack([0.25 + 1.2 * np.cos(ang), 1.2 * np.sin(ang)])
        p = problem(ring, (0.5, 0.0), n_planes=2)
        with pytest.raises(Infeasible):
            separate_constrained(p, SATISFIABILITY)

    def test_empty_obstacles_free_space(self):
        p = problem(np.zeros((0, 2)), (2.0, 0.0))
        region = separate_constrained(p, SATISFIABILITY)
        assert verify_separation(region, p)
        assert region.polyhedron.contains((0.0, 0.0))
        assert region.polyhedron.contains((2.0, 0.0))

    def test_unknown_objective(self):
        with pytest.raises(ValueError):
            separate_constrained(wall_problem(), "cosine")


class TestSeparateBilevel:
    def test_two_walls_two_planes(self):
        ys = np.linspace(-1.0, 2.0, 15)
        pts = np.vstack(
            [np.column_stack([np.full_like(ys, 2.0), ys]),
             np.column_stack([np.full_like(ys, -2.0), ys])]
        )
        p = problem(pts, (0.0, 1.0))
        region = separate_bilevel(p)
        assert verify_separation(region, p)
        assert len(region.planes) == 2
        for h in region.planes:
            assert abs(h.a[0]) > 0.9  # near-vertical separating lines
        assert region.quality_R <= 2.0

    def test_empty_obstacles_bounded_by_default_planes(self):
        p = problem(np.zeros((0, 2)), (2.0, 0.0), d=5.0)
        region = separate_bilevel(p)
        assert len(region.planes) == 4
        A, b = region.polyhedron.as_leq()
        # far planes sit at distance d from the protected hull
        slack = b - A @ np.zeros(2)
        assert slack.min() >= 5.0 - 1e-9

    def test_single_point_single_plane(self):
        p = problem([[2.0, 1.0]], (1.0, 0.0))
        region = separate_bilevel(p)
        assert len(region.planes) == 1
        assert verify_separation(region, p)

    def test_plane_count_not_more_than_matched_constrained(self):
        rng = np.random.default_rng(123)
        checked = 0
        for _ in range(100):
            p = random_separation_problem(rng, n_points=int(rng.integers(10, 80)))
            try:
                bi = separate_bilevel(p)
            except Infeasible:
                continue
            p2 = problem_like(p, n_planes=len(bi.planes))
            try:
                co = separate_constrained(p2, SATISFIABILITY)
            except Infeasible:
                continue
            checked += 1
            assert len(bi.planes) <= len(co.planes)
        assert checked >= 30  # the consistency check must actually exercise pairs


def problem_like(p, n_planes):
    return SeparationProblem(
        obstacles=p.obstacles,
        ego_corners=p.ego_corners,
        target=p.target,
        n_planes=n_planes,
        margin=p.margin,
    )


def thin_stadium_track(half_width=1.0):
    xs = np.linspace(0.0, 40.0, 401)
    loop = np.vstack(
        [np.column_stack([xs, np.zeros_like(xs) - 20.0]),
         np.column_stack([xs[::-1], np.zeros_like(xs) + 20.0])]
    )
    return Track.from_centerline(loop, half_width=half_width)


def ring_track(radius=5.0, half_width=1.0):
    ang = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    circle = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    return Track.from_centerline(circle, half_width=half_width)


class TestMpccCorridor:
    def test_straight_corridor(self):
        track = thin_stadium_track()
        region = mpcc_corridor(track, (3.0, 0.2 - 20.0))
        assert len(region.planes) == 2
        # planes are y = -19 and y = -21; normals point inward so the
        # centerline point sits at signed distance +1 from both
        for h in region.planes:
            assert h.signed_distance((3.0, -20.0)) == pytest.approx(1.0, abs=1e-3)
        assert region.polyhedron.contains((3.0, -20.0))
        assert not region.polyhedron.contains((3.0, -18.5))
        assert not region.polyhedron.contains((3.0, -21.5))

    def test_ring_tangents(self):
        track = ring_track()
        ego = (5.0, 0.0)
        region = mpcc_corridor(track, ego)
        # tangent construction oracle: radial normals at the projections
        for h in region.planes:
            assert abs(abs(h.a[0]) - 1.0) < 5e-3  # normals along +-x at angle 0
        A, b = region.polyhedron.as_leq()
        assert region.polyhedron.contains(ego)
        assert not region.polyhedron.contains((3.8, 0.0))   # beyond inner tangent
        assert not region.polyhedron.contains((6.2, 0.0))   # beyond outer tangent

    def test_contains_centerline_point_at_ego_station(self):
        track = ring_track()
        rng = np.random.default_rng(4)
        for _ in range(25):
            s = rng.uniform(0, track.total_length)
            ego = track.point_at(s) + rng.uniform(-0.6, 0.6) * track.left_normal_at(s)
            region = mpcc_corridor(track, ego)
            _, center, _, _ = track.frame(ego)
            assert region.polyhedron.contains(center)


class TestVerifySeparation:
    def corridor_region(self):
        planes = [
            Hyperplane(np.array([0.0, 1.0]), 0.95),
            Hyperplane(np.array([0.0, -1.0]), 0.95),
        ]
        return SafeRegion(Polyhedron([(h, KEEP_LE) for h in planes]), planes)

    def test_valid_corridor(self):
        p = wall_problem()
        assert verify_separation(self.corridor_region(), p)

    def test_obstacle_inside_fails(self):
        p = wall_problem()
        pts = np.vstack([p.obstacles.points, [[1.0, 0.0]]])
        bad = SeparationProblem(
            obstacles=ObservableSet(pts, 5.0),
            ego_corners=p.ego_corners,
            target=p.target,
            margin=p.margin,
        )
        assert not verify_separation(self.corridor_region(), bad)

    def test_target_outside_fails(self):
        p = wall_problem()
        moved = SeparationProblem(
            obstacles=p.obstacles,
            ego_corners=p.ego_corners,
            target=Point2(3.0, 2.0),
            margin=p.margin,
        )
        assert not verify_separation(self.corridor_region(), moved)


class TestInscribedRadius:
    def region_box(self, lo, hi):
        return SafeRegion(Polyhedron.box(lo, hi), [])

    def test_square_symmetric(self):
        r = inscribed_radius_quality(
            self.region_box((-1, -1), (1, 1)), (-0.5, 0.0), (0.5, 0.0)
        )
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_corridor(self):
        region = SafeRegion(
            Polyhedron(
                [
                    (Hyperplane(np.array([0.0, 1.0]), 1.0), KEEP_LE),
                    (Hyperplane(np.array([0.0, -1.0]), 1.0), KEEP_LE),
                ]
            ),
            [],
        )
        r = inscribed_radius_quality(region, (0.0, 0.0), (7.0, 0.0))
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_pinned_by_low_plane(self):
        region = self.region_box((-10.0, 0.0), (10.0, 1.0))
        r = inscribed_radius_quality(region, (0.0, 0.2), (1.0, 0.2))
        assert r == pytest.approx(0.2, abs=1e-9)

    def test_segment_outside_is_infeasible(self):
        with pytest.raises(Infeasible):
            inscribed_radius_quality(
                self.region_box((-1, -1), (1, 1)), (5.0, 0.0), (6.0, 0.0)
            )

    def test_grid_oracle_agreement(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            m = int(rng.integers(3, 9))
            ang = rng.uniform(0, 2 * math.pi, m)
            A = np.column_stack([np.cos(ang), np.sin(ang)])
            b = rng.uniform(0.8, 3.0, m)
            region = SafeRegion(Polyhedron.from_leq(A, b), [])
            ego = np.zeros(2)
            target = rng.uniform(-0.5, 0.5, 2)
            if not (region.polyhedron.contains(ego) and region.polyhedron.contains(target)):
                continue
            r = inscribed_radius_quality(region, ego, target)
            lam = np.linspace(0.0, 1.0, 2001)
            centers = ego[None, :] + lam[:, None] * (target - ego)[None, :]
            grid_r = (b[None, :] - centers @ A.T).min(axis=1).max()
            assert r >= grid_r - 1e-12
            assert abs(r - grid_r) < 2e-3


class TestRegionInvariants:
    def test_all_methods_verify_on_random_instances(self):
        rng = np.random.default_rng(77)
        produced = 0
        for _ in range(40):
            p = random_separation_problem(rng, n_points=int(rng.integers(10, 120)))
            for solve in (
                lambda q: separate_constrained(q, SATISFIABILITY),
                lambda q: separate_constrained(q, EUCLIDEAN_SUM),
                lambda q: separate_constrained(q, HAUSDORFF_MAX),
                separate_bilevel,
            ):
                try:
                    region = solve(p)
                except Infeasible:
                    continue
                produced += 1
                assert verify_separation(region, p)
        assert produced > 100

    def test_scale_invariance_of_verification(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = random_separation_problem(rng, n_points=40)
            try:
                region = separate_bilevel(p)
            except Infeasible:
                continue
            for lam in (0.5, 2.0, 13.0):
                scaled_p = SeparationProblem(
                    obstacles=ObservableSet(
                        p.obstacles.points * lam, p.obstacles.radius_d * lam
                    ),
                    ego_corners=p.ego_corners * lam,
                    target=Point2(p.target.x * lam, p.target.y * lam),
                    n_planes=p.n_planes,
                    margin=p.margin * lam,
                )
                scaled_planes = [Hyperplane(h.a, h.b * lam) for h in region.planes]
                scaled_region = SafeRegion(
                    Polyhedron([(h, KEEP_LE) for h in scaled_planes]), scaled_planes
                )
                assert verify_separation(scaled_region, scaled_p)

    def test_quality_bounded_by_obstacle_distance(self):
        # an inscribed ball cannot contain obstacle points, so quality_R is
        # at most the best clearance available at any center on the segment
        rng = np.random.default_rng(6)
        for _ in range(25):
            p = random_separation_problem(rng, n_points=60)
            try:
                region = separate_bilevel(p)
            except Infeasible:
                continue
            if math.isnan(region.quality_R):
                continue
            seg = p.target.xy - p.ego_center.xy
            lam = np.linspace(0.0, 1.0, 2001)
            centers = p.ego_center.xy[None, :] + lam[:, None] * seg[None, :]
            clearance = np.linalg.norm(
                centers[:, None, :] - p.obstacles.points[None, :, :], axis=2
            ).min(axis=1)
            slack = np.linalg.norm(seg) / 2000.0  # grid resolution
            assert region.quality_R <= clearance.max() + slack + 1e-9
