"""Vehicle model, local planners (pure pursuit, disparity extender) and MPC.

The MPC solves a receding-horizon problem over a kinematic bicycle model by
sequential linearization: linearize the dynamics about the current input
sequence, solve the resulting convex QP with the safe-region halfspace
constraints applied to all four footprint corners, line-search on a merit
function, repeat.  The returned ``predicted_states`` are always an exact
``step_dynamics`` rollout of the returned inputs, so dynamics defects are
zero by construction.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from cvxopt import matrix as _cvx_matrix
from cvxopt import solvers as _cvx_solvers

from .errors import BoundsViolation, NoGap, NoTarget
from .geom import Point2, as_xy

_cvx_solvers.options["show_progress"] = False
_cvx_solvers.options["abstol"] = 1e-6
_cvx_solvers.options["reltol"] = 1e-5

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

_FEAS_TOL = 1e-8
_SLACK_PENALTY = 1e4


@dataclass(frozen=True)
class VehicleState:
    """Planar kinematic state: position (m), heading (rad), speed (m/s)."""

    x: float
    y: float
    heading: float
    v: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.heading, self.v))):
            raise ValueError("VehicleState fields must be finite")

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.v])

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


@dataclass(frozen=True)
class ControlInput:
    """Longitudinal acceleration (m/s^2) and front steering angle (rad)."""

    accel: float
    steer: float

    def as_array(self) -> np.ndarray:
        return np.array([self.accel, self.steer])


@dataclass
class MpcParams:
    """Horizon, weights and bounds of the receding-horizon controller."""

    horizon: int = 20
    dt: float = 0.05
    w_pos: float = 1.0
    w_heading: float = 0.0
    w_speed: float = 0.4
    w_input: float = 0.05
    w_input_rate: float = 0.5
    w_terminal: float = 8.0
    v_max: float = 8.0
    a_max: float = 6.0
    steer_max: float = 0.4
    wheelbase: float = 0.33
    v_ref: float = 3.0
    footprint_length: float = 0.5
    footprint_width: float = 0.3
    corner_margin: float = 0.0
    max_sqp_iter: int = 30
    cost_tol: float = 1e-6

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        weights = (
            self.w_pos, self.w_heading, self.w_speed,
            self.w_input, self.w_input_rate, self.w_terminal,
        )
        if any(w < 0.0 for w in weights):
            raise ValueError("weights must be non-negative")


@dataclass
class MpcSolution:
    """Result of one MPC solve.

    ``inputs`` is (N, 2) [accel, steer]; ``predicted_states`` is (N+1, 4)
    and always equals the exact rollout of ``inputs`` from the initial state.
    """

    inputs: np.ndarray
    predicted_states: np.ndarray
    status: str
    cost: float
    n_iter: int = 0

    @property
    def first_input(self) -> ControlInput:
        return ControlInput(float(self.inputs[0, 0]), float(self.inputs[0, 1]))


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


def step_dynamics(
    state: VehicleState,
    u: ControlInput,
    dt: float,
    wheelbase: float,
    v_max: float | None = None,
    a_max: float | None = None,
    steer_max: float | None = None,
) -> VehicleState:
    """Explicit-Euler kinematic bicycle step.

    Speed is clamped to [0, v_max].  If ``a_max``/``steer_max`` are given the
    input is validated against them and ``BoundsViolation`` raised.
    """
    if a_max is not None and abs(u.accel) > a_max + 1e-12:
        raise BoundsViolation(f"|accel|={abs(u.accel)} exceeds a_max={a_max}")
    if steer_max is not None and abs(u.steer) > steer_max + 1e-12:
        raise BoundsViolation(f"|steer|={abs(u.steer)} exceeds steer_max={steer_max}")
    x = state.x + state.v * math.cos(state.heading) * dt
    y = state.y + state.v * math.sin(state.heading) * dt
    heading = state.heading + state.v / wheelbase * math.tan(u.steer) * dt
    v = state.v + u.accel * dt
    v = max(0.0, v if v_max is None else min(v, v_max))
    return VehicleState(x, y, heading, v)


def rollout(s0: VehicleState, inputs: np.ndarray, params: MpcParams) -> np.ndarray:
    """(N+1, 4) state trajectory from applying ``inputs`` (N, 2)."""
    n = inputs.shape[0]
    states = np.empty((n + 1, 4))
    states[0] = s0.as_array()
    s = s0
    for k in range(n):
        s = step_dynamics(
            s,
            ControlInput(float(inputs[k, 0]), float(inputs[k, 1])),
            params.dt,
            params.wheelbase,
            v_max=params.v_max,
        )
        states[k + 1] = s.as_array()
    return states


def footprint_corners(x: float, y: float, heading: float, length: float, width: float):
    """(4, 2) world-frame corners of a centered rectangular footprint."""
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


# ---------------------------------------------------------------------------
# Pure pursuit
# ---------------------------------------------------------------------------


@dataclass
class PurePursuitParams:
    wheelbase: float = 0.33
    speed_ref: float = 3.0
    accel_gain: float = 4.0
    a_max: float = 6.0
    steer_max: float = 0.4
    curve_slowdown: float = 0.6
    closed: bool = True


def pure_pursuit(
    state: VehicleState,
    path: np.ndarray,
    lookahead: float,
    params: PurePursuitParams | None = None,
):
    """Target point at ``lookahead`` arc-length ahead plus a tracking input.

    Steering follows the circular-arc rule delta = atan(L * kappa) with
    kappa = 2 sin(alpha) / lookahead, alpha the target bearing in the
    vehicle frame.  Raises NoTarget when an open path is exhausted.
    """
    params = params or PurePursuitParams()
    path = np.asarray(path, dtype=np.float64)
    if path.shape[0] == 0:
        raise NoTarget("empty path")
    pos = np.array([state.x, state.y])
    i0 = int(np.argmin(((path - pos) ** 2).sum(axis=1)))

    # walk forward along the path until lookahead arc-length is covered
    n = path.shape[0]
    acc = 0.0
    i = i0
    target = None
    for _ in range(n + 1):
        j = i + 1
        if j >= n:
            if not params.closed:
                raise NoTarget("open path exhausted before lookahead")
            j = 0
        acc += float(np.linalg.norm(path[j] - path[i]))
        if acc >= lookahead:
            target = path[j]
            break
        i = j
    if target is None:
        # path shorter than lookahead; aim at the farthest point reached
        if not params.closed:
            raise NoTarget("path shorter than lookahead")
        target = path[i0 - 1]

    dx, dy = target[0] - state.x, target[1] - state.y
    alpha = math.atan2(dy, dx) - state.heading
    alpha = (alpha + math.pi) % (2.0 * math.pi) - math.pi
    kappa = 2.0 * math.sin(alpha) / lookahead
    steer = max(-params.steer_max, min(params.steer_max, math.atan(params.wheelbase * kappa)))

    v_cmd = params.speed_ref * max(
        0.25, 1.0 - params.curve_slowdown * abs(steer) / params.steer_max
    )
    accel = max(-params.a_max, min(params.a_max, params.accel_gain * (v_cmd - state.v)))
    return Point2(float(target[0]), float(target[1])), ControlInput(accel, steer)


# ---------------------------------------------------------------------------
# Disparity extender
# ---------------------------------------------------------------------------


@dataclass
class DisparityParams:
    vehicle_half_width: float = 0.2
    disparity_threshold: float = 0.4
    min_gap_range: float = 1.0
    target_cap: float = 5.0


def masked_disparity_ranges(ranges: np.ndarray, increment: float, params: DisparityParams):
    """Ranges with each disparity edge extended by the vehicle half-width."""
    r = np.asarray(ranges, dtype=np.float64).copy()
    n = r.shape[0]
    src = np.asarray(ranges, dtype=np.float64)
    for i in range(n - 1):
        gap = src[i + 1] - src[i]
        if abs(gap) <= params.disparity_threshold:
            continue
        if gap > 0.0:  # shorter on the low-index side: extend forward
            short = src[i]
            m = int(math.ceil(params.vehicle_half_width / max(short * increment, 1e-9)))
            hi = min(n, i + 1 + m)
            r[i + 1 : hi] = np.minimum(r[i + 1 : hi], short)
        else:  # shorter on the high-index side: extend backward
            short = src[i + 1]
            m = int(math.ceil(params.vehicle_half_width / max(short * increment, 1e-9)))
            lo = max(0, i + 1 - m)
            r[lo : i + 1] = np.minimum(r[lo : i + 1], short)
    return r


def disparity_extender(scan, params: DisparityParams | None = None) -> Point2:
    """Gap-follower target point from a LiDAR scan.

    1. extend range disparities by the vehicle half-width,
    2. pick the widest contiguous run of beams above the minimum range,
    3. aim at the run's center beam, capped at ``target_cap`` meters.

    Raises NoGap if every masked beam is below the minimum range.
    """
    params = params or DisparityParams()
    ranges = np.asarray(scan.ranges, dtype=np.float64)
    offsets = np.asarray(scan.offsets, dtype=np.float64)
    if ranges.shape[0] < 2:
        raise NoGap("scan too short")
    increment = float(offsets[1] - offsets[0])
    masked = masked_disparity_ranges(ranges, increment, params)

    open_beam = masked >= params.min_gap_range
    if not open_beam.any():
        raise NoGap("all beams below the minimum gap range")

    # widest contiguous run; first one wins ties
    best_start = best_len = -1
    run_start = None
    for i, flag in enumerate(np.append(open_beam, False)):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - run_start > best_len:
                best_len = i - run_start
                best_start = run_start
            run_start = None

    center = best_start + (best_len - 1) // 2
    dist = min(float(masked[center]), params.target_cap)
    (px, py), heading = scan.pose
    angle = heading + float(offsets[center])
    return Point2(px + dist * math.cos(angle), py + dist * math.sin(angle))


# ---------------------------------------------------------------------------
# MPC: cost, linearization, condensing
# ---------------------------------------------------------------------------


def _references(s0: VehicleState, target, params: MpcParams):
    t = as_xy(target)
    psi_ref = math.atan2(t[1] - s0.y, t[0] - s0.x)
    return t, psi_ref


def _stage_weights(params: MpcParams):
    q = np.array([params.w_pos, params.w_pos, params.w_heading, params.w_speed])
    q_term = np.array([params.w_terminal, params.w_terminal, 0.0, 0.0])
    r = np.array([params.w_input, params.w_input])
    w_rate = np.array([params.w_input_rate, params.w_input_rate])
    return q, q_term, r, w_rate


def _state_residuals(states: np.ndarray, target_xy, psi_ref, params: MpcParams):
    res = states.copy()
    res[:, 0] -= target_xy[0]
    res[:, 1] -= target_xy[1]
    res[:, 2] = (res[:, 2] - psi_ref + math.pi) % (2.0 * math.pi) - math.pi
    res[:, 3] -= params.v_ref
    return res


def trajectory_cost(
    s0: VehicleState,
    inputs: np.ndarray,
    target,
    params: MpcParams,
    u_prev: np.ndarray | None = None,
) -> float:
    """Nonlinear cost of rolling ``inputs`` out from ``s0``."""
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, 2)
    states = rollout(s0, inputs, params)
    return _cost_of(states, inputs, target, params, u_prev)


def _cost_of(states, inputs, target, params, u_prev):
    t, psi_ref = _references(VehicleState.from_array(states[0]), target, params)
    q, q_term, r, w_rate = _stage_weights(params)
    res = _state_residuals(states, t, psi_ref, params)
    cost = float((res[1:-1] ** 2 @ q).sum())  # stages 1..N-1; x_0 is fixed
    cost += float(res[-1] ** 2 @ q_term)
    cost += float((inputs ** 2 @ r).sum())
    prev = np.zeros(2) if u_prev is None else np.asarray(u_prev, dtype=np.float64)
    du = np.diff(np.vstack([prev[None, :], inputs]), axis=0)
    cost += float((du ** 2 @ w_rate).sum())
    return cost


def _linearize(states: np.ndarray, inputs: np.ndarray, params: MpcParams):
    """Branch-aware Jacobians of step_dynamics along a trajectory."""
    n = inputs.shape[0]
    dt, L = params.dt, params.wheelbase
    A = np.zeros((n, 4, 4))
    B = np.zeros((n, 4, 2))
    for k in range(n):
        _, _, psi, v = states[k]
        a, steer = inputs[k]
        A[k] = np.eye(4)
        A[k, 0, 2] = -v * math.sin(psi) * dt
        A[k, 0, 3] = math.cos(psi) * dt
        A[k, 1, 2] = v * math.cos(psi) * dt
        A[k, 1, 3] = math.sin(psi) * dt
        A[k, 2, 3] = math.tan(steer) * dt / L
        B[k, 2, 1] = v * dt / (L * math.cos(steer) ** 2)
        v_next = v + a * dt
        if 0.0 <= v_next <= params.v_max:  # speed clamp inactive (boundary
            B[k, 3, 0] = dt                # included: one-sided identity)
        else:
            A[k, 3, 3] = 0.0
    return A, B


def _condense(A: np.ndarray, B: np.ndarray):
    """Sensitivity Phi of stacked states (k=1..N) to stacked inputs: (4N, 2N)."""
    n = A.shape[0]
    phi = np.zeros((4 * n, 2 * n))
    # row block k-1 holds d x_k / d u_j
    phi[0:4, 0:2] = B[0]
    for k in range(1, n):
        rows = slice(4 * k, 4 * k + 4)
        prev = slice(4 * (k - 1), 4 * k)
        phi[rows, 0 : 2 * k] = A[k] @ phi[prev, 0 : 2 * k]
        phi[rows, 2 * k : 2 * k + 2] = B[k]
    return phi


def _quadratic_model(states, inputs, target, params, u_prev):
    """(H, g) of the QP model of the cost around the current trajectory."""
    n = inputs.shape[0]
    t, psi_ref = _references(VehicleState.from_array(states[0]), target, params)
    q, q_term, r, w_rate = _stage_weights(params)
    res = _state_residuals(states, t, psi_ref, params)

    A, B = _linearize(states, inputs, params)
    phi = _condense(A, B)

    q_diag = np.tile(q, n)
    q_diag[-4:] = q_term
    H = phi.T * q_diag[None, :] @ phi
    g = phi.T @ (q_diag * res[1:].ravel())

    r_diag = np.tile(r, n)
    H[np.diag_indices_from(H)] += r_diag
    g += r_diag * inputs.ravel()

    prev = np.zeros(2) if u_prev is None else np.asarray(u_prev, dtype=np.float64)
    d = np.eye(2 * n)
    d[np.arange(2, 2 * n), np.arange(0, 2 * n - 2)] -= 1.0
    w_diag = np.tile(w_rate, n)
    du_res = np.diff(np.vstack([prev[None, :], inputs]), axis=0).ravel()
    H += d.T * w_diag[None, :] @ d
    g += d.T @ (w_diag * du_res)
    return 2.0 * H, 2.0 * g, phi


def cost_gradient(
    s0: VehicleState,
    inputs: np.ndarray,
    target,
    params: MpcParams,
    u_prev: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of trajectory_cost w.r.t. the stacked inputs.

    Computed through the linearized dynamics; exact wherever the speed clamp
    is inactive along the trajectory.
    """
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1, 2)
    states = rollout(s0, inputs, params)
    _, g, _ = _quadratic_model(states, inputs, target, params, u_prev)
    return g


def _corner_rows(states, phi, poly_A, poly_b, params):
    """Linearized halfspace rows G du <= h for all footprint corners, k>=1."""
    n = states.shape[0] - 1
    hl, hw = 0.5 * params.footprint_length, 0.5 * params.footprint_width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])  # (4, 2)
    n_planes = poly_A.shape[0]

    psi = states[1:, 2]
    c, s = np.cos(psi), np.sin(psi)
    # corners[k, i] = pos_k + Rot(psi_k) local_i
    rot = np.empty((n, 2, 2))
    rot[:, 0, 0] = c; rot[:, 0, 1] = -s
    rot[:, 1, 0] = s; rot[:, 1, 1] = c
    corners = np.einsum("kab,ib->kia", rot, local) + states[1:, None, 0:2]
    # d corner / d psi_k
    drot = np.empty((n, 2, 2))
    drot[:, 0, 0] = -s; drot[:, 0, 1] = -c
    drot[:, 1, 0] = c;  drot[:, 1, 1] = -s
    dpsi = np.einsum("kab,ib->kia", drot, local)  # (n, 4, 2)

    phi_k = phi.reshape(n, 4, 2 * n)
    # sensitivity of corner (k, i) to du: rows of phi for x,y plus psi row
    sens = phi_k[:, None, 0:2, :] + dpsi[..., None] * phi_k[:, None, None, 2, :]
    # (n, 4, 2, 2n) -> project onto plane normals: (n, 4, n_planes, 2n)
    G = np.einsum("pa,kiaz->kipz", poly_A, sens).reshape(-1, 2 * n)
    h = (
        poly_b[None, None, :]
        - params.corner_margin
        - np.einsum("pa,kia->kip", poly_A, corners)
    ).reshape(-1)
    return G, h


def _corner_violation(states, poly_A, poly_b, params):
    """Worst halfspace violation over all corners of states k>=1 (>=0)."""
    worst = 0.0
    hl, hw = 0.5 * params.footprint_length, 0.5 * params.footprint_width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    for k in range(1, states.shape[0]):
        x, y, psi, _ = states[k]
        c, s = math.cos(psi), math.sin(psi)
        rot = np.array([[c, -s], [s, c]])
        corners = local @ rot.T + np.array([x, y])
        viol = (corners @ poly_A.T - poly_b[None, :]).max()
        worst = max(worst, float(viol))
    return worst


def _solve_qp(H, g, G, h):
    """min 0.5 z'Hz + g'z  s.t.  Gz <= h; returns None on solver failure."""
    nz = H.shape[0]
    H = H + 1e-9 * np.eye(nz)
    try:
        sol = _cvx_solvers.qp(
            _cvx_matrix(H), _cvx_matrix(g), _cvx_matrix(G), _cvx_matrix(h)
        )
    except (ValueError, ZeroDivisionError, ArithmeticError):
        return None
    if sol["status"] not in ("optimal", "unknown"):
        return None
    z = np.array(sol["x"]).ravel()
    if sol["status"] == "unknown" and not np.all(G @ z <= h + 1e-6):
        return None
    return z


def _braking_plan(s0: VehicleState, params: MpcParams):
    inputs = np.zeros((params.horizon, 2))
    v = s0.v
    for k in range(params.horizon):
        inputs[k, 0] = max(-params.a_max, -v / params.dt)
        v = max(0.0, v + inputs[k, 0] * params.dt)
    return inputs


def solve_mpc(
    s0: VehicleState,
    region,
    target,
    params: MpcParams,
    u_init: np.ndarray | None = None,
    u_prev: np.ndarray | None = None,
) -> MpcSolution:
    """Receding-horizon MPC constrained to a convex safe region.

    ``region`` is a SafeRegion or a bare geom.Polyhedron; its halfspaces are
    imposed on all four footprint corners of every predicted state.  Returns
    the best feasible trajectory found; status is ``infeasible`` when none
    exists (the caller should brake), ``max_iter`` when the iteration cap was
    reached before the cost settled.
    """
    poly = getattr(region, "polyhedron", region)
    poly_A, poly_b = poly.as_leq()
    n = params.horizon

    if not poly.contains((s0.x, s0.y)):
        inputs = _braking_plan(s0, params)
        states = rollout(s0, inputs, params)
        return MpcSolution(inputs, states, INFEASIBLE,
                           _cost_of(states, inputs, target, params, u_prev))

    if u_init is not None:
        u = np.asarray(u_init, dtype=np.float64).reshape(n, 2).copy()
        u[:, 0] = np.clip(u[:, 0], -params.a_max, params.a_max)
        u[:, 1] = np.clip(u[:, 1], -params.steer_max, params.steer_max)
    else:
        u = np.zeros((n, 2))

    box_G = np.vstack([np.eye(2 * n), -np.eye(2 * n)])
    bounds = np.tile([params.a_max, params.steer_max], n)

    states = rollout(s0, u, params)
    cost = _cost_of(states, u, target, params, u_prev)
    viol = _corner_violation(states, poly_A, poly_b, params)
    merit = cost + _SLACK_PENALTY * viol

    best = None
    if viol <= _FEAS_TOL:
        best = (u.copy(), states.copy(), cost)

    status = MAX_ITER
    it = 0
    for it in range(1, params.max_sqp_iter + 1):
        H, g, phi = _quadratic_model(states, u, target, params, u_prev)
        Gc, hc = _corner_rows(states, phi, poly_A, poly_b, params)
        G = np.vstack([Gc, box_G])
        h = np.concatenate([hc, bounds - u.ravel(), bounds + u.ravel()])

        du = _solve_qp(H, g, G, h)
        if du is None:
            # retry with a shared softening slack on the corner rows
            nz = 2 * n
            H2 = np.zeros((nz + 1, nz + 1))
            H2[:nz, :nz] = H
            g2 = np.concatenate([g, [_SLACK_PENALTY]])
            G2 = np.zeros((G.shape[0] + 1, nz + 1))
            G2[: G.shape[0], :nz] = G
            G2[: Gc.shape[0], nz] = -1.0
            G2[-1, nz] = -1.0  # slack >= 0
            h2 = np.concatenate([h, [0.0]])
            z = _solve_qp(H2, g2, G2, h2)
            if z is None:
                break
            du = z[:nz]

        step = du.reshape(n, 2)
        improved = False
        for alpha in (1.0, 0.5, 0.25, 0.125, 0.0625):
            u_try = u + alpha * step
            u_try[:, 0] = np.clip(u_try[:, 0], -params.a_max, params.a_max)
            u_try[:, 1] = np.clip(u_try[:, 1], -params.steer_max, params.steer_max)
            states_try = rollout(s0, u_try, params)
            cost_try = _cost_of(states_try, u_try, target, params, u_prev)
            viol_try = _corner_violation(states_try, poly_A, poly_b, params)
            merit_try = cost_try + _SLACK_PENALTY * viol_try
            if merit_try < merit - 1e-12:
                u, states, cost, viol = u_try, states_try, cost_try, viol_try
                delta = merit - merit_try
                merit = merit_try
                improved = True
                if viol <= _FEAS_TOL and (best is None or cost < best[2]):
                    best = (u.copy(), states.copy(), cost)
                if delta < params.cost_tol:
                    status = OPTIMAL
                break
        if not improved:
            status = OPTIMAL  # no descent direction left
            break
        if status == OPTIMAL:
            break

    if best is None:
        inputs = _braking_plan(s0, params)
        states = rollout(s0, inputs, params)
        return MpcSolution(inputs, states, INFEASIBLE,
                           _cost_of(states, inputs, target, params, u_prev), it)
    u_best, states_best, cost_best = best
    return MpcSolution(u_best, states_best, status, cost_best, it)
