import math

import numpy as np
import pytest

from hyperrace import kernels
from hyperrace.control import footprint_corners
from hyperrace.convexify import SeparationProblem
from hyperrace.geom import Point2
from hyperrace.sensing import ObservableSet


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jit kernels once so timed tests exclude compilation."""
    kernels.warmup()


def random_separation_problem(
    rng: np.random.Generator,
    n_points: int | None = None,
    d: float = 5.0,
    margin: float = 0.05,
    n_planes: int = 2,
) -> SeparationProblem:
    """Random obstacle cloud around an ego/target pair.

    Points live in the [1, d] annulus around the ego, grouped into a few
    angular sectors (wall- and vehicle-like clusters), with a 0.3 m corridor
    around the ego-target segment kept clear.
    """
    if n_points is None:
        n_points = int(rng.integers(10, 201))
    ego_heading = rng.uniform(0.0, 2.0 * math.pi)
    ego = footprint_corners(0.0, 0.0, ego_heading, 0.5, 0.3)
    t_ang = rng.uniform(0.0, 2.0 * math.pi)
    t_dist = rng.uniform(1.5, 3.0)
    target = Point2(t_dist * math.cos(t_ang), t_dist * math.sin(t_ang))

    k = int(rng.integers(1, 5))
    centers = rng.uniform(0.0, 2.0 * math.pi, size=k)
    widths = rng.uniform(math.radians(10.0), math.radians(60.0), size=k)

    seg = target.xy  # segment from origin to target
    seg_len2 = float(seg @ seg)
    pts = []
    tries = 0
    while len(pts) < n_points and tries < 50 * n_points:
        tries += 1
        c = int(rng.integers(0, k))
        ang = centers[c] + rng.uniform(-0.5, 0.5) * widths[c]
        r = rng.uniform(1.0, d)
        q = np.array([r * math.cos(ang), r * math.sin(ang)])
        lam = np.clip((q @ seg) / seg_len2, 0.0, 1.0)
        if np.linalg.norm(q - lam * seg) < 0.3:
            continue
        pts.append(q)
    points = np.array(pts) if pts else np.zeros((0, 2))
    return SeparationProblem(
        obstacles=ObservableSet(points, d),
        ego_corners=ego,
        target=target,
        n_planes=n_planes,
        margin=margin,
    )
