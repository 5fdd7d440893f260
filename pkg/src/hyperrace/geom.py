"""Exact 2D primitives: hyperplanes, polyhedra, boxes, oriented rectangles.

All predicates use the shared tolerances below so that tests and callers
agree on what "inside" means:

* ``CONTAINS_TOL`` (1e-9) for geometric membership,
* ``LP_FEAS_TOL`` (1e-7) for linear-program feasibility slack.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible, Unbounded

CONTAINS_TOL = 1e-9
LP_FEAS_TOL = 1e-7

#: side markers for halfspace selection: KEEP_GE keeps {x | a.x >= b},
#: KEEP_LE keeps {x | a.x <= b}
KEEP_GE = 1
KEEP_LE = -1


def as_xy(p) -> np.ndarray:
    """Coerce a Point2 / tuple / array-like to a float64 (2,) array."""
    if isinstance(p, Point2):
        return np.array([p.x, p.y], dtype=np.float64)
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (2,):
        raise ValueError(f"expected a 2D point, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Point2:
    """A finite point in the plane (meters)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("Point2 coordinates must be finite")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def dist(self, other) -> float:
        o = as_xy(other)
        return float(math.hypot(self.x - o[0], self.y - o[1]))


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """The line {x | a . x = b} with unit normal ``a`` and offset ``b``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        n = np.linalg.norm(a)
        if a.shape != (2,) or n == 0.0:
            raise ValueError("hyperplane normal must be a nonzero 2-vector")
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"hyperplane normal must be unit length, got |a|={n}")

    @classmethod
    def from_general(cls, a, b: float) -> "Hyperplane":
        """Build from an unnormalized (a, b); both are divided by |a|."""
        a = np.asarray(a, dtype=np.float64)
        n = np.linalg.norm(a)
        if n == 0.0:
            raise ValueError("hyperplane normal must be nonzero")
        return cls(a / n, float(b) / n)

    @classmethod
    def from_angle(cls, phi: float, b: float) -> "Hyperplane":
        return cls(np.array([math.cos(phi), math.sin(phi)]), b)

    def signed_distance(self, p) -> float:
        """a . p - b; positive iff p lies strictly in {x | a . x > b}."""
        q = as_xy(p)
        return float(self.a[0] * q[0] + self.a[1] * q[1] - self.b)


def signed_distance(h: Hyperplane, p) -> float:
    return h.signed_distance(p)


class Polyhedron:
    """Intersection of closed halfspaces, each a (Hyperplane, side) pair.

    ``side`` is ``KEEP_GE`` (+1) to keep {a.x >= b} or ``KEEP_LE`` (-1) to
    keep {a.x <= b}.  Membership is tested within ``CONTAINS_TOL``.
    """

    def __init__(self, halfspaces):
        self.halfspaces = list(halfspaces)
        if any(side not in (KEEP_GE, KEEP_LE) for _, side in self.halfspaces):
            raise ValueError("halfspace side must be KEEP_GE or KEEP_LE")
        # canonical "A x <= b" form: multiply each row by -side
        n = len(self.halfspaces)
        self._A = np.zeros((n, 2), dtype=np.float64)
        self._b = np.zeros(n, dtype=np.float64)
        for i, (h, side) in enumerate(self.halfspaces):
            self._A[i] = -side * h.a
            self._b[i] = -side * h.b

    def __len__(self) -> int:
        return len(self.halfspaces)

    @classmethod
    def from_leq(cls, A, b) -> "Polyhedron":
        """Build from rows of A x <= b (rows are normalized here)."""
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return cls(
            [(Hyperplane.from_general(A[i], b[i]), KEEP_LE) for i in range(len(b))]
        )

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron":
        lo = as_xy(lo)
        hi = as_xy(hi)
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        b = np.array([hi[0], -lo[0], hi[1], -lo[1]])
        return cls.from_leq(A, b)

    def as_leq(self):
        """(A, b) with every constraint written as A x <= b, unit rows."""
        return self._A, self._b

    def contains(self, p, tol: float = CONTAINS_TOL) -> bool:
        q = as_xy(p)
        return bool(np.all(self._A @ q <= self._b + tol))

    def slacks(self, points: np.ndarray) -> np.ndarray:
        """(n_points, n_halfspaces) slack b - A x; >= 0 means satisfied."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self._b[None, :] - pts @ self._A.T


def polyhedron_contains(P: Polyhedron, p) -> bool:
    return P.contains(p)


def chebyshev_center(P: Polyhedron):
    """Center and radius of the largest ball inscribed in ``P``.

    Solves  max R  s.t.  A c + R <= b  (rows of A are unit normals), R >= 0
    as a linear program.

    Raises
    ------
    Infeasible
        if ``P`` is empty.
    Unbounded
        if the radius grows without bound (fewer than three non-parallel
        enclosing constraints).
    """
    if len(P) < 1:
        raise ValueError("polyhedron needs at least one halfspace")
    A, b = P.as_leq()
    m = A.shape[0]
    A_ub = np.column_stack([A, np.ones(m)])
    c = np.array([0.0, 0.0, -1.0])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if res.status == 2:
        raise Infeasible("polyhedron is empty")
    if res.status == 3:
        raise Unbounded("inscribed radius is unbounded")
    if not res.success:  # pragma: no cover - defensive
        raise Infeasible(f"chebyshev LP failed: {res.message}")
    return Point2(float(res.x[0]), float(res.x[1])), float(res.x[2])


@dataclass(frozen=True)
class Box2:
    """Axis-aligned box [lo.x, hi.x] x [lo.y, hi.y]."""

    lo: Point2
    hi: Point2

    def __post_init__(self):
        if self.lo.x > self.hi.x or self.lo.y > self.hi.y:
            raise ValueError("Box2 requires lo <= hi componentwise")

    @classmethod
    def from_arrays(cls, lo, hi) -> "Box2":
        lo = as_xy(lo)
        hi = as_xy(hi)
        return cls(Point2(lo[0], lo[1]), Point2(hi[0], hi[1]))

    @property
    def center(self) -> Point2:
        return Point2(0.5 * (self.lo.x + self.hi.x), 0.5 * (self.lo.y + self.hi.y))

    def corners(self) -> np.ndarray:
        """(4, 2) array of corner coordinates, counter-clockwise."""
        return np.array(
            [
                [self.lo.x, self.lo.y],
                [self.hi.x, self.lo.y],
                [self.hi.x, self.hi.y],
                [self.lo.x, self.hi.y],
            ]
        )

    def contains(self, p, tol: float = CONTAINS_TOL) -> bool:
        q = as_xy(p)
        return bool(
            self.lo.x - tol <= q[0] <= self.hi.x + tol
            and self.lo.y - tol <= q[1] <= self.hi.y + tol
        )

    def union(self, other: "Box2") -> "Box2":
        return Box2(
            Point2(min(self.lo.x, other.lo.x), min(self.lo.y, other.lo.y)),
            Point2(max(self.hi.x, other.hi.x), max(self.hi.y, other.hi.y)),
        )

    def inflate(self, rx: float, ry: float | None = None) -> "Box2":
        ry = rx if ry is None else ry
        return Box2(
            Point2(self.lo.x - rx, self.lo.y - ry),
            Point2(self.hi.x + rx, self.hi.y + ry),
        )


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle with center, heading (radians) and positive side lengths."""

    center: Point2
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("OrientedRect requires positive length and width")

    def corners(self) -> np.ndarray:
        """(4, 2) corner coordinates in world frame, counter-clockwise."""
        hl = 0.5 * self.length
        hw = 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c = math.cos(self.heading)
        s = math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center.xy

    def axes(self) -> np.ndarray:
        """(2, 2) unit edge normals (long axis, short axis)."""
        c = math.cos(self.heading)
        s = math.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    def bounding_box(self) -> Box2:
        cs = self.corners()
        return Box2.from_arrays(cs.min(axis=0), cs.max(axis=0))


def rect_overlap(r1: OrientedRect, r2: OrientedRect) -> bool:
    """Separating-axis intersection test over the 4 edge normals."""
    c1 = r1.corners()
    c2 = r2.corners()
    for axis in np.vstack([r1.axes(), r2.axes()]):
        p1 = c1 @ axis
        p2 = c2 @ axis
        if p1.max() < p2.min() or p2.max() < p1.min():
            return False
    return True
