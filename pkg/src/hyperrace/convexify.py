"""Convex safe-region construction around the ego vehicle.

Three ways to bound a convex, obstacle-free polyhedron that contains the
ego footprint and its target point:

* ``separate_constrained`` -- fixed number of planes, derivative-free
  constrained optimisation (linear-approximation trust region, COBYLA) over
  (angle, offset) pairs.  One vectorised constraint row per obstacle point
  encodes "some plane puts this point beyond the margin".
* ``separate_bilevel`` -- variable plane count: fit candidate planes to
  angular clusters of the obstacle cloud, then greedily prune any plane
  whose removal keeps the separation valid, re-scoring the region with the
  inscribed-radius program after each drop.
* ``mpcc_corridor`` -- optimisation-free baseline: two planes tangent to
  the track borders at the ego's centerline station, no obstacle awareness.

All returned regions pass ``verify_separation``; methods raise
``Infeasible`` instead of returning an unverified region.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize

from .errors import Infeasible
from .geom import KEEP_GE, KEEP_LE, Hyperplane, Point2, Polyhedron, as_xy
from .sensing import ObservableSet
from .world import Track

SATISFIABILITY = "sat"
EUCLIDEAN_SUM = "euclid"
HAUSDORFF_MAX = "hausdorff"
OBJECTIVES = (SATISFIABILITY, EUCLIDEAN_SUM, HAUSDORFF_MAX)

DEFAULT_MARGIN = 0.05
DEFAULT_N_PLANES = 2

_COBYLA_MAXITER = 250
_GRID_ANGLES = 180          # fallback feasibility grid (2-plane search)
_CLUSTER_ANGLES = 256       # per-cluster plane-angle search
_SEPARABLE_ANGLES = 360     # single-point separability certificate
_CLUSTER_GAP = math.radians(25.0)


@dataclass
class SeparationProblem:
    """Obstacle cloud to separate from the ego footprint and its target."""

    obstacles: ObservableSet
    ego_corners: np.ndarray  # (4, 2)
    target: Point2
    n_planes: int = DEFAULT_N_PLANES
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        self.ego_corners = np.asarray(self.ego_corners, dtype=np.float64).reshape(4, 2)
        if not isinstance(self.target, Point2):
            t = as_xy(self.target)
            self.target = Point2(t[0], t[1])
        if self.n_planes < 1:
            raise ValueError("n_planes must be >= 1")
        pts = self.obstacles.points.reshape(-1, 2)
        if pts.shape[0]:
            protected = self.protected_points()
            d = np.linalg.norm(pts[:, None, :] - protected[None, :, :], axis=2)
            if d.min() < 1e-12:
                raise ValueError(
                    "ego corners and target must not be members of the obstacle set"
                )

    def protected_points(self) -> np.ndarray:
        """(5, 2): the four ego corners plus the target."""
        return np.vstack([self.ego_corners, self.target.xy[None, :]])

    @property
    def ego_center(self) -> Point2:
        c = self.ego_corners.mean(axis=0)
        return Point2(c[0], c[1])


@dataclass
class SafeRegion:
    """Convex region bounded by separating planes.

    ``quality_R`` is the inscribed radius along the ego-target segment
    (NaN when the producing method has no target, e.g. the corridor
    baseline).
    """

    polyhedron: Polyhedron
    planes: list = field(default_factory=list)
    quality_R: float = float("nan")


# ---------------------------------------------------------------------------
# Verification and quality
# ---------------------------------------------------------------------------


def verify_separation(region: SafeRegion, p: SeparationProblem) -> bool:
    """Brute-force check of the separation contract.

    Every obstacle point must violate at least one region halfspace by more
    than margin/2, and every ego corner plus the target must lie inside the
    polyhedron.
    """
    protected = p.protected_points()
    if not all(region.polyhedron.contains(pt) for pt in protected):
        return False
    pts = p.obstacles.points.reshape(-1, 2)
    if pts.shape[0] == 0:
        return True
    A, b = region.polyhedron.as_leq()
    excess = pts @ A.T - b[None, :]  # how far beyond each plane
    return bool((excess.max(axis=1) >= 0.5 * p.margin).all())


def inscribed_radius_quality(region: SafeRegion, ego, target) -> float:
    """Largest ball radius with center on the ego-target segment.

    Solves  max R  s.t.  c = ego + lam * (target - ego), lam in [0, 1],
    ball(c, R) inside the polyhedron -- a 2-variable LP, resolved exactly on
    the breakpoints of the piecewise-linear slack envelope.

    Raises Infeasible if the whole segment lies outside the polyhedron.
    """
    e = as_xy(ego)
    t = as_xy(target)
    A, b = region.polyhedron.as_leq()
    alpha = b - A @ e           # slack at lam = 0
    beta = -A @ (t - e)         # slack slope in lam
    candidates = [0.0, 1.0]
    m = len(alpha)
    for i in range(m):
        for j in range(i + 1, m):
            db = beta[i] - beta[j]
            if abs(db) < 1e-14:
                continue
            lam = (alpha[j] - alpha[i]) / db
            if 0.0 < lam < 1.0:
                candidates.append(float(lam))
    lam_arr = np.array(candidates)
    radii = (alpha[None, :] + lam_arr[:, None] * beta[None, :]).min(axis=1)
    best = float(radii.max())
    if best < 0.0:
        raise Infeasible("ego-target segment lies outside the region")
    return best


# ---------------------------------------------------------------------------
# Shared machinery
# ---------------------------------------------------------------------------


def _unit_dirs(n: int) -> np.ndarray:
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _region_from(planes, p: SeparationProblem) -> SafeRegion:
    poly = Polyhedron([(h, KEEP_LE) for h in planes])
    region = SafeRegion(poly, list(planes))
    try:
        region.quality_R = inscribed_radius_quality(
            region, p.ego_center, p.target
        )
    except Infeasible:
        region.quality_R = float("nan")
    return region


def _free_space_region(p: SeparationProblem) -> SafeRegion:
    """No observable obstacles: bound by far default planes at distance d."""
    d = p.obstacles.radius_d
    pts = p.protected_points()
    lo = pts.min(axis=0) - d
    hi = pts.max(axis=0) + d
    planes = [
        Hyperplane(np.array([1.0, 0.0]), hi[0]),
        Hyperplane(np.array([-1.0, 0.0]), -lo[0]),
        Hyperplane(np.array([0.0, 1.0]), hi[1]),
        Hyperplane(np.array([0.0, -1.0]), -lo[1]),
    ]
    return _region_from(planes, p)


def _best_plane_for(points, protected, margin, n_angles=_CLUSTER_ANGLES):
    """Best single plane putting ``points`` beyond and ``protected`` inside.

    Searches plane normals on an angle grid; the offset hugs the obstacle
    side (largest feasible b).  Returns (a, b) or None if no grid angle
    separates with the required 2*margin gap.
    """
    dirs = _unit_dirs(n_angles)
    obs_min = points @ dirs.T if points.shape[0] else np.full(n_angles, np.inf)
    obs_min = obs_min.min(axis=0)
    prot_max = (protected @ dirs.T).max(axis=0)
    gap = obs_min - prot_max
    k = int(np.argmax(gap))
    if gap[k] < 2.0 * margin:
        return None
    a = dirs[k]
    b = obs_min[k] - margin  # obstacle-tight placement maximises the region
    return a, float(b)


def _point_separable(q, protected, margin, n_angles=_SEPARABLE_ANGLES) -> bool:
    """Certificate that a single point can be cut off by some plane."""
    dirs = _unit_dirs(n_angles)
    gap = dirs @ q - (protected @ dirs.T).max(axis=0)
    return bool(gap.max() >= 2.0 * margin)


def _angular_clusters(points, center, max_clusters=16):
    """Indices of points grouped by contiguous bearing around ``center``."""
    ang = np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0])
    order = np.argsort(ang)
    sorted_ang = ang[order]
    n = len(points)
    if n == 1:
        return [order]
    gaps = np.diff(np.concatenate([sorted_ang, [sorted_ang[0] + 2 * math.pi]]))
    cut_after = np.nonzero(gaps > _CLUSTER_GAP)[0]
    if cut_after.size == 0:
        return [order]
    clusters = []
    starts = (cut_after + 1) % n
    for i in range(len(cut_after)):
        start = starts[i - 1]
        end = cut_after[i]
        if start <= end:
            clusters.append(order[start : end + 1])
        else:  # wraps around the branch cut
            clusters.append(np.concatenate([order[start:], order[: end + 1]]))
    # merge the smallest clusters into neighbors if there are too many
    while len(clusters) > max_clusters:
        sizes = [len(c) for c in clusters]
        k = int(np.argmin(sizes))
        clusters[k - 1] = np.concatenate([clusters[k - 1], clusters[k]])
        del clusters[k]
    return clusters


def _cluster_planes(points, protected, margin, center):
    """Candidate plane set: one plane per angular cluster, splitting
    clusters that no single plane can cut off.  None if some point is not
    separable at all."""
    planes = []
    queue = list(_angular_clusters(points, center))
    guard = 0
    while queue:
        guard += 1
        if guard > 10 * len(points) + 100:  # pragma: no cover - safety net
            return None
        idx = queue.pop()
        sub = points[idx]
        fit = _best_plane_for(sub, protected, margin)
        if fit is not None:
            planes.append(fit)
            continue
        if len(idx) == 1:
            if not _point_separable(sub[0], protected, margin):
                return None
            # separable on the finer grid but not the cluster grid
            fit = _best_plane_for(sub, protected, margin, n_angles=_SEPARABLE_ANGLES)
            if fit is None:
                return None
            planes.append(fit)
            continue
        # split by bearing and retry
        ang = np.arctan2(sub[:, 1] - center[1], sub[:, 0] - center[0])
        med = np.median(ang)
        left = idx[ang <= med]
        right = idx[ang > med]
        if len(left) == 0 or len(right) == 0:
            half = len(idx) // 2
            order = np.argsort(ang)
            left, right = idx[order[:half]], idx[order[half:]]
        queue.append(left)
        queue.append(right)
    return planes


def _coverage_ok(points, A, b, margin) -> bool:
    """Every point beyond at least one plane by the full margin."""
    if points.shape[0] == 0:
        return True
    if A.shape[0] == 0:
        return False
    excess = points @ A.T - b[None, :]
    return bool((excess.max(axis=1) >= margin - 1e-12).all())


# ---------------------------------------------------------------------------
# Constrained optimisation method
# ---------------------------------------------------------------------------


def _decode(z: np.ndarray):
    phi = z[0::2]
    b = z[1::2]
    A = np.column_stack([np.cos(phi), np.sin(phi)])
    return A, b


def _sep_distances(margins: np.ndarray) -> np.ndarray:
    """Per-point distance to its closest separating plane (0 if none)."""
    seps = np.where(margins >= 0.0, margins, np.inf)
    d = seps.min(axis=1)
    return np.where(np.isfinite(d), d, 0.0)


def _merged_cluster_fits(points, protected, margin, center, n):
    """Best-gap plane per cluster after merging down to at most n clusters.

    Unlike _cluster_planes this never splits or gives up: offsets fall back
    to the mid-gap position when the cluster is not cleanly separable, which
    still makes a useful warm start.
    """
    clusters = _angular_clusters(points, center, max_clusters=n)
    dirs = _unit_dirs(_CLUSTER_ANGLES)
    prot_max = (protected @ dirs.T).max(axis=0)
    fits = []
    for idx in clusters:
        obs_min = (points[idx] @ dirs.T).min(axis=0)
        k = int(np.argmax(obs_min - prot_max))
        a = dirs[k]
        b_tight = obs_min[k] - margin
        b_floor = prot_max[k] + margin
        fits.append((a, float(max(b_tight, b_floor))))
    return fits


def _constrained_starts(p: SeparationProblem, points, protected):
    """Initial decision vectors for the derivative-free solve."""
    n = p.n_planes
    starts = []
    fits = _merged_cluster_fits(points, protected, p.margin, p.ego_center.xy, n)
    if fits:
        z = np.zeros(2 * n)
        for j in range(n):
            if j < len(fits):
                a, b = fits[j]
            else:  # pad: far plane that keeps everything protected inside
                a = np.array([math.cos(j), math.sin(j)])
                b = float((protected @ a).max() + p.obstacles.radius_d)
            z[2 * j] = math.atan2(a[1], a[0])
            z[2 * j + 1] = b
        starts.append(z)
        bumped = z.copy()
        bumped[0::2] += 0.35
        starts.append(bumped)
    # axis-aligned fallback start pointing at the obstacle centroid
    if points.shape[0]:
        c = points.mean(axis=0) - p.ego_center.xy
        phi0 = math.atan2(c[1], c[0])
    else:
        phi0 = 0.0
    z = np.zeros(2 * n)
    for j in range(n):
        phi = phi0 + 2.0 * math.pi * j / max(n, 1)
        a = np.array([math.cos(phi), math.sin(phi)])
        z[2 * j] = phi
        z[2 * j + 1] = float((protected @ a).max() + 2.0 * p.margin + 0.5)
    starts.append(z)
    return starts


def _grid_pair_search(points, protected, margin, n_angles=_GRID_ANGLES):
    """Exhaustive 2-plane arrangement search on an angle grid.

    Offsets sit at the tightest protected-side position, which maximises
    coverage; returns (planes, None) or None when no pair covers the cloud.
    """
    dirs = _unit_dirs(n_angles)
    prot_max = (protected @ dirs.T).max(axis=0)
    b_min = prot_max + margin
    sep = (points @ dirs.T) - b_min[None, :] >= margin  # (n_pts, n_angles)
    cover = sep.T  # (n_angles, n_pts)
    packed = np.packbits(cover, axis=1)
    full = np.packbits(np.ones((1, points.shape[0]), dtype=bool), axis=1)[0]
    for i in range(n_angles):
        union = packed[i] | packed
        hit = np.nonzero((union == full[None, :]).all(axis=1))[0]
        if hit.size:
            j = int(hit[0])
            planes = []
            for k, other in ((i, j), (j, i)):
                # raise the offset as far as the points the other plane
                # does not cover allow (hugging the cloud widens the region)
                must = points[~sep[:, other]]
                proj = must @ dirs[k] if must.shape[0] else points @ dirs[k]
                b = max(float(b_min[k]), float(proj.min()) - margin)
                planes.append((dirs[k], b))
            return planes
    return None


def separate_constrained(
    p: SeparationProblem,
    objective: str = SATISFIABILITY,
    maxiter: int = _COBYLA_MAXITER,
) -> SafeRegion:
    """Fixed-count separating planes by derivative-free optimisation.

    Decision variables are (angle, offset) per plane.  Constraints demand
    every obstacle point beyond some plane by the margin and every ego
    corner plus the target inside all planes by the margin; the objective
    pulls planes toward the obstacle cloud (or is constant for ``sat``).

    Raises Infeasible when no verifying arrangement is found; with the
    default two planes this is certified against an exhaustive angle-grid
    search before giving up.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; have {OBJECTIVES}")
    points = p.obstacles.points.reshape(-1, 2)
    if points.shape[0] == 0:
        return _free_space_region(p)
    protected = p.protected_points()
    margin = p.margin

    def constraints(z):
        A, b = _decode(z)
        obs_margin = points @ A.T - b[None, :]
        prot_slack = b[None, :] - protected @ A.T
        return np.concatenate(
            [obs_margin.max(axis=1) - margin, prot_slack.min(axis=1) - margin]
        )

    if objective == SATISFIABILITY:
        def cost(z):
            return 0.0
    elif objective == EUCLIDEAN_SUM:
        def cost(z):
            A, b = _decode(z)
            return float(_sep_distances(points @ A.T - b[None, :]).sum())
    else:  # HAUSDORFF_MAX
        def cost(z):
            A, b = _decode(z)
            return float(_sep_distances(points @ A.T - b[None, :]).max())

    cons = [{"type": "ineq", "fun": constraints}]
    for z0 in _constrained_starts(p, points, protected):
        res = minimize(
            cost, z0, method="COBYLA", constraints=cons,
            options={"maxiter": maxiter, "rhobeg": 0.4},
        )
        A, b = _decode(res.x)
        planes = [Hyperplane(A[j], b[j]) for j in range(p.n_planes)]
        region = _region_from(planes, p)
        if verify_separation(region, p):
            return region

    if p.n_planes == 2:
        found = _grid_pair_search(points, protected, margin)
        if found is not None:
            # polish from the certified arrangement; fall back to it verbatim
            z0 = np.zeros(4)
            for j, (a, b) in enumerate(found):
                z0[2 * j] = math.atan2(a[1], a[0])
                z0[2 * j + 1] = b
            res = minimize(
                cost, z0, method="COBYLA", constraints=cons,
                options={"maxiter": maxiter, "rhobeg": 0.1},
            )
            A, b = _decode(res.x)
            region = _region_from([Hyperplane(A[j], b[j]) for j in range(2)], p)
            if verify_separation(region, p):
                return region
            region = _region_from([Hyperplane(a, b) for a, b in found], p)
            if verify_separation(region, p):
                return region
    raise Infeasible(
        f"no {p.n_planes}-plane arrangement separates {points.shape[0]} points"
    )


# ---------------------------------------------------------------------------
# Bi-level method
# ---------------------------------------------------------------------------


def separate_bilevel(p: SeparationProblem) -> SafeRegion:
    """Minimum-count separating planes by fit-then-prune.

    The outer loop proposes one plane per angular obstacle cluster and then
    greedily drops any plane whose removal keeps the separation valid; the
    inner inscribed-radius program re-scores the region after every drop.
    """
    points = p.obstacles.points.reshape(-1, 2)
    if points.shape[0] == 0:
        return _free_space_region(p)
    protected = p.protected_points()
    margin = p.margin

    fits = _cluster_planes(points, protected, margin, p.ego_center.xy)
    if fits is None:
        raise Infeasible(
            "an obstacle point cannot be cut from the ego/target hull by any plane"
        )
    A = np.array([a for a, _ in fits])
    b = np.array([bb for _, bb in fits])
    if not _coverage_ok(points, A, b, margin):  # pragma: no cover - defensive
        raise Infeasible("candidate planes fail to cover the obstacle cloud")

    keep = list(range(len(fits)))
    changed = True
    while changed and len(keep) > 1:
        changed = False
        for j in list(keep):
            trial = [k for k in keep if k != j]
            if _coverage_ok(points, A[trial], b[trial], margin):
                keep = trial
                changed = True
    planes = [Hyperplane(A[k], b[k]) for k in keep]
    region = _region_from(planes, p)
    if not verify_separation(region, p):  # pragma: no cover - defensive
        raise Infeasible("pruned plane set failed verification")
    return region


# ---------------------------------------------------------------------------
# Corridor baseline
# ---------------------------------------------------------------------------


def mpcc_corridor(track: Track, ego) -> SafeRegion:
    """Two planes tangent to the track borders at the ego's station.

    Normals point inward (toward the centerline); there is no obstacle
    awareness.  ``quality_R`` is NaN because no target is involved.
    """
    s, center, left_pt, right_pt = track.frame(ego)
    planes = []
    for border in (left_pt, right_pt):
        n = center.xy - border.xy
        norm = np.linalg.norm(n)
        if norm < 1e-12:  # degenerate: zero-width track sample
            continue
        n = n / norm
        planes.append(Hyperplane(n, float(n @ border.xy)))
    poly = Polyhedron([(h, KEEP_GE) for h in planes])
    return SafeRegion(poly, planes)
