"""Online box reachability of opponent vehicles with an anytime budget.

Boxes advance by face lifting: each face moves with the min/max of the state
derivative normal to it.  For the constant-bound kinematic opponent model
this degenerates to exact interval integration, so coarser budgets produce
the same boxes at the times they share with finer ones.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import BudgetTooSmall
from .geom import Box2, Point2

#: assumed cost of one lifting step when converting a microsecond budget
#: into a step count (kept constant so budgeted runs stay deterministic)
STEP_COST_US = 2.0

DEFAULT_HORIZON = 0.5
DEFAULT_DT = 0.05


@dataclass(frozen=True)
class KinematicObstacle:
    """Opponent described by position/velocity intervals and a footprint.

    ``velocity_box`` bounds (vx, vy); ``footprint`` is (length, width) of
    the vehicle body, or None for a point obstacle.
    """

    position_box: Box2
    velocity_box: Box2
    footprint: tuple | None = None

    def __post_init__(self):
        v = self.velocity_box
        if not all(map(math.isfinite, (v.lo.x, v.lo.y, v.hi.x, v.hi.y))):
            raise ValueError("velocity bounds must be finite")

    @property
    def footprint_radius(self) -> float:
        """Half diagonal of the footprint: inflation that covers the body
        at any orientation."""
        if self.footprint is None:
            return 0.0
        length, width = self.footprint
        return 0.5 * math.hypot(length, width)


@dataclass
class ReachTube:
    """Time-indexed over-approximating boxes covering [0, horizon]."""

    steps: list  # [(t, Box2), ...] with strictly increasing t, t[0] == 0
    horizon: float

    def box_at(self, t: float) -> Box2:
        """Box at time t, interpolating between stored steps.

        Exact for constant derivative bounds (faces move linearly in t).
        """
        times = [st for st, _ in self.steps]
        if t <= times[0]:
            return self.steps[0][1]
        if t >= times[-1]:
            return self.steps[-1][1]
        j = int(np.searchsorted(times, t))
        t0, b0 = self.steps[j - 1]
        t1, b1 = self.steps[j]
        w = (t - t0) / (t1 - t0)
        lo = (1 - w) * np.array([b0.lo.x, b0.lo.y]) + w * np.array([b1.lo.x, b1.lo.y])
        hi = (1 - w) * np.array([b0.hi.x, b0.hi.y]) + w * np.array([b1.hi.x, b1.hi.y])
        return Box2(Point2(*lo), Point2(*hi))

    @property
    def final_box(self) -> Box2:
        return self.steps[-1][1]


def face_lifting_step(box: Box2, deriv_bounds: Box2, dt: float) -> Box2:
    """Advance each face by its outward derivative bound times dt.

    ``deriv_bounds.lo`` holds the minimum derivative of each coordinate,
    ``deriv_bounds.hi`` the maximum.  The result contains the exact one-step
    image of ``box`` under any derivative within the bounds.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return Box2(
        Point2(box.lo.x + deriv_bounds.lo.x * dt, box.lo.y + deriv_bounds.lo.y * dt),
        Point2(box.hi.x + deriv_bounds.hi.x * dt, box.hi.y + deriv_bounds.hi.y * dt),
    )


def compute_reachtube(
    obs: KinematicObstacle,
    horizon: float = DEFAULT_HORIZON,
    steps: int | None = None,
    budget_us: float | None = None,
) -> ReachTube:
    """Reach tube over [0, horizon] under a step or microsecond budget.

    Smaller budgets take fewer, larger lifting steps (the anytime contract:
    every budget yields a sound tube).  All boxes are inflated by the
    opponent footprint half-diagonal.

    Raises BudgetTooSmall if not even one step fits the budget.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if steps is None and budget_us is None:
        steps = max(1, int(round(horizon / DEFAULT_DT)))
    elif steps is None:
        if budget_us <= 0.0:
            raise BudgetTooSmall("non-positive time budget")
        steps = int(budget_us / STEP_COST_US)
        if steps < 1:
            raise BudgetTooSmall(
                f"budget {budget_us} us below one step ({STEP_COST_US} us)"
            )
        steps = min(steps, max(1, int(round(horizon / DEFAULT_DT))))
    elif steps < 1:
        raise BudgetTooSmall("step budget must be >= 1")

    dt = horizon / steps
    r = obs.footprint_radius
    box = obs.position_box
    out = [(0.0, box.inflate(r))]
    for k in range(1, steps + 1):
        box = face_lifting_step(box, obs.velocity_box, dt)
        out.append((k * dt, box.inflate(r)))
    return ReachTube(out, horizon)


def tube_hull(tube: ReachTube) -> Box2:
    """Smallest box containing every step box of the tube."""
    if not tube.steps:
        raise ValueError("tube is empty")
    hull = tube.steps[0][1]
    for _, box in tube.steps[1:]:
        hull = hull.union(box)
    return hull
