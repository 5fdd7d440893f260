import math
from dataclasses import dataclass

import numpy as np
import pytest

from hyperrace.control import (
    INFEASIBLE,
    OPTIMAL,
    ControlInput,
    DisparityParams,
    MpcParams,
    PurePursuitParams,
    VehicleState,
    cost_gradient,
    disparity_extender,
    footprint_corners,
    masked_disparity_ranges,
    pure_pursuit,
    rollout,
    solve_mpc,
    step_dynamics,
    trajectory_cost,
)
from hyperrace.errors import BoundsViolation, NoGap
from hyperrace.geom import Polyhedron

L = 0.33


class TestStepDynamics:
    def test_straight_line(self):
        s = VehicleState(1.0, 2.0, 0.0, 1.0)
        s1 = step_dynamics(s, ControlInput(0.0, 0.0), 0.1, L)
        assert s1.x == pytest.approx(1.1)
        assert s1.y == pytest.approx(2.0)
        assert s1.heading == pytest.approx(0.0)
        assert s1.v == pytest.approx(1.0)

    def test_no_motion_at_zero_speed(self):
        s = VehicleState(0.0, 0.0, 0.5, 0.0)
        s1 = step_dynamics(s, ControlInput(0.0, 0.3), 0.1, L)
        assert (s1.x, s1.y, s1.heading) == (0.0, 0.0, 0.5)

    def test_turning_radius(self):
        # constant steer + speed converges to a circle of radius L / tan(delta)
        delta = 0.3
        s = VehicleState(0.0, 0.0, 0.0, 1.0)
        pts = []
        for _ in range(1000):
            s = step_dynamics(s, ControlInput(0.0, delta), 0.001, L)
            pts.append((s.x, s.y))
        pts = np.asarray(pts)
        # Kasa circle fit
        A = np.column_stack([2 * pts[:, 0], 2 * pts[:, 1], np.ones(len(pts))])
        b = (pts ** 2).sum(axis=1)
        cx, cy, c = np.linalg.lstsq(A, b, rcond=None)[0]
        radius = math.sqrt(c + cx ** 2 + cy ** 2)
        expected = L / math.tan(delta)
        assert abs(radius - expected) / expected < 0.01

    def test_speed_clamped(self):
        s = VehicleState(0.0, 0.0, 0.0, 1.0)
        s1 = step_dynamics(s, ControlInput(-50.0, 0.0), 0.1, L)
        assert s1.v == 0.0
        s2 = step_dynamics(s, ControlInput(50.0, 0.0), 0.1, L, v_max=2.0)
        assert s2.v == 2.0

    def test_bounds_violation(self):
        s = VehicleState(0.0, 0.0, 0.0, 1.0)
        with pytest.raises(BoundsViolation):
            step_dynamics(s, ControlInput(10.0, 0.0), 0.1, L, a_max=6.0)
        with pytest.raises(BoundsViolation):
            step_dynamics(s, ControlInput(0.0, 0.5), 0.1, L, steer_max=0.4)


class TestPurePursuit:
    def test_target_dead_ahead(self):
        path = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        s = VehicleState(0.0, 0.0, 0.0, 1.0)
        target, u = pure_pursuit(s, path, 2.0, PurePursuitParams(closed=False))
        assert target.y == pytest.approx(0.0)
        assert u.steer == pytest.approx(0.0)

    def test_bearing_formula(self):
        alpha = math.pi / 6
        lookahead = 2.0
        path = np.array(
            [[0.0, 0.0], [lookahead * math.cos(alpha), lookahead * math.sin(alpha)]]
        )
        s = VehicleState(0.0, 0.0, 0.0, 1.0)
        _, u = pure_pursuit(s, path, lookahead, PurePursuitParams(closed=False))
        kappa = 2.0 * math.sin(alpha) / lookahead
        assert kappa == pytest.approx(0.5)
        assert u.steer == pytest.approx(math.atan(0.33 * 0.5), abs=1e-6)

    def test_mirrored_target_negates_steer(self):
        lookahead = 2.0
        for alpha in (0.2, 0.7, 1.1):
            up = np.array([[0.0, 0.0],
                           [lookahead * math.cos(alpha), lookahead * math.sin(alpha)]])
            dn = up * np.array([1.0, -1.0])
            s = VehicleState(0.0, 0.0, 0.0, 1.0)
            _, u1 = pure_pursuit(s, up, lookahead, PurePursuitParams(closed=False))
            _, u2 = pure_pursuit(s, dn, lookahead, PurePursuitParams(closed=False))
            assert u1.steer == pytest.approx(-u2.steer)


@dataclass
class FakeScan:
    ranges: np.ndarray
    offsets: np.ndarray
    pose: tuple


def make_scan(ranges, fov=math.pi * 1.5, pose=((0.0, 0.0), 0.0)):
    ranges = np.asarray(ranges, dtype=float)
    m = len(ranges)
    offsets = -fov / 2 + np.arange(m) * (fov / (m - 1))
    return FakeScan(ranges, offsets, pose)


class TestDisparityExtender:
    def test_uniform_scan_targets_straight_ahead(self):
        scan = make_scan(np.full(101, 4.0))
        target = disparity_extender(scan, DisparityParams(target_cap=5.0))
        # center beam of the single full-width gap points along heading 0
        assert target.y == pytest.approx(0.0, abs=1e-9)
        assert target.x == pytest.approx(4.0)

    def test_blocked_left_targets_right(self):
        ranges = np.concatenate([np.full(50, 0.6), np.full(51, 10.0)])
        scan = make_scan(ranges)
        params = DisparityParams(min_gap_range=1.0, target_cap=5.0)
        target = disparity_extender(scan, params)
        # oracle: widest run of beams above min range
        masked = masked_disparity_ranges(
            ranges, scan.offsets[1] - scan.offsets[0], params
        )
        open_idx = np.nonzero(masked >= params.min_gap_range)[0]
        assert open_idx.min() >= 50  # gap lives entirely on the far (right) half
        center = open_idx[0] + (len(open_idx) - 1) // 2
        angle = scan.offsets[center]
        assert target.x == pytest.approx(5.0 * math.cos(angle))
        assert target.y == pytest.approx(5.0 * math.sin(angle))

    def test_disparity_mask_width(self):
        # single step 10 -> 0.5 at beam k; beams k-m..k end up at 0.5
        m_beams = 101
        k = 60
        ranges = np.full(m_beams, 10.0)
        ranges[k:] = 0.5
        scan = make_scan(ranges)
        inc = scan.offsets[1] - scan.offsets[0]
        params = DisparityParams(vehicle_half_width=0.2)
        masked = masked_disparity_ranges(ranges, inc, params)
        m = math.ceil(params.vehicle_half_width / (0.5 * inc))
        assert np.all(masked[k - m : k + 1] == 0.5)
        assert np.all(masked[: k - m] == 10.0)

    def test_no_gap(self):
        scan = make_scan(np.full(51, 0.3))
        with pytest.raises(NoGap):
            disparity_extender(scan, DisparityParams(min_gap_range=1.0))


def big_region():
    return Polyhedron.box((-100.0, -100.0), (100.0, 100.0))


def corner_slack_min(states, poly, params):
    A, b = poly.as_leq()
    worst = np.inf
    for k in range(1, states.shape[0]):
        corners = footprint_corners(
            states[k, 0], states[k, 1], states[k, 2],
            params.footprint_length, params.footprint_width,
        )
        worst = min(worst, float((b[None, :] - corners @ A.T).min()))
    return worst


class TestSolveMpc:
    def test_equilibrium_at_target(self):
        params = MpcParams(v_ref=0.0)
        s0 = VehicleState(1.0, 2.0, 0.3, 0.0)
        sol = solve_mpc(s0, big_region(), (1.0, 2.0), params)
        assert sol.status == OPTIMAL
        assert np.abs(sol.inputs).max() <= 1e-3
        assert sol.cost <= 1e-6

    def test_progress_toward_target(self):
        params = MpcParams()
        s0 = VehicleState(0.0, 0.0, 0.0, 1.0)
        target = (5.0, 0.0)
        sol = solve_mpc(s0, big_region(), target, params)
        assert sol.status in (OPTIMAL, "max_iter")
        d0 = np.hypot(*(np.asarray(target) - sol.predicted_states[0, :2]))
        d_end = np.hypot(*(np.asarray(target) - sol.predicted_states[-1, :2]))
        assert d_end < d0
        # distances shrink monotonically in free space
        dists = np.hypot(
            sol.predicted_states[:, 0] - target[0],
            sol.predicted_states[:, 1] - target[1],
        )
        assert np.all(np.diff(dists) <= 1e-9)

    def test_constraints_dominate_target(self):
        params = MpcParams()
        region = Polyhedron.box((-10.0, -0.2), (10.0, 0.2))
        s0 = VehicleState(0.0, 0.0, 0.0, 1.0)
        sol = solve_mpc(s0, region, (2.0, 1.0), params)
        assert sol.status != INFEASIBLE
        assert corner_slack_min(sol.predicted_states, region, params) >= -1e-6
        assert np.all(np.abs(sol.predicted_states[:, 1]) < 0.2)

    def test_start_outside_region_is_infeasible(self):
        params = MpcParams()
        region = Polyhedron.box((-1.0, -1.0), (1.0, 1.0))
        s0 = VehicleState(5.0, 0.0, 0.0, 1.0)
        sol = solve_mpc(s0, region, (0.0, 0.0), params)
        assert sol.status == INFEASIBLE
        # braking plan comes back for logging
        assert sol.inputs[0, 0] < 0.0

    def test_dynamics_defect_is_zero(self):
        params = MpcParams()
        s0 = VehicleState(0.0, 0.0, 0.2, 2.0)
        sol = solve_mpc(s0, big_region(), (4.0, 1.0), params)
        re_rolled = rollout(s0, sol.inputs, params)
        assert np.abs(re_rolled - sol.predicted_states).max() <= 1e-6

    def test_inputs_within_bounds(self):
        params = MpcParams()
        s0 = VehicleState(0.0, 0.0, 0.0, 0.5)
        sol = solve_mpc(s0, big_region(), (8.0, 3.0), params)
        assert np.all(np.abs(sol.inputs[:, 0]) <= params.a_max + 1e-9)
        assert np.all(np.abs(sol.inputs[:, 1]) <= params.steer_max + 1e-9)


class TestCostGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        params = MpcParams(horizon=8)
        for _ in range(10):
            s0 = VehicleState(
                rng.uniform(-1, 1), rng.uniform(-1, 1),
                rng.uniform(-1, 1), rng.uniform(1.0, 3.0),
            )
            target = rng.uniform(-3, 3, size=2)
            u = np.column_stack(
                [rng.uniform(-1.0, 1.0, 8), rng.uniform(-0.2, 0.2, 8)]
            )
            g = cost_gradient(s0, u, target, params)
            fd = np.zeros_like(g)
            h = 1e-6
            flat = u.ravel()
            for i in range(flat.size):
                up = flat.copy(); up[i] += h
                dn = flat.copy(); dn[i] -= h
                fd[i] = (
                    trajectory_cost(s0, up, target, params)
                    - trajectory_cost(s0, dn, target, params)
                ) / (2 * h)
            denom = max(np.linalg.norm(fd), 1e-9)
            assert np.linalg.norm(g - fd) / denom <= 1e-4
