"""Simulated LiDAR, scan simplification and observable obstacle sets.

Point clouds are plain (N, 2) float arrays throughout.  A scan's beams are
ordered anti-clockwise; beam i points at ``heading - fov/2 + i * increment``.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .geom import as_xy

#: point clouds are (N, 2) float64 arrays
PointCloud = np.ndarray


@dataclass(frozen=True)
class LidarConfig:
    """Beam count, total field of view (rad) and maximum range (m)."""

    beams: int = 1080
    fov: float = math.radians(270.0)
    max_range: float = 30.0

    def __post_init__(self):
        if self.beams < 2:
            raise ValueError("need at least 2 beams")
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError("fov must be in (0, 2*pi]")

    @property
    def increment(self) -> float:
        return self.fov / (self.beams - 1)

    def offsets(self) -> np.ndarray:
        """Beam angles relative to the heading, ascending (anti-clockwise)."""
        return -0.5 * self.fov + np.arange(self.beams) * self.increment


@dataclass
class LidarScan:
    """Ranges, the pose they were taken from, and the beam angle offsets."""

    ranges: np.ndarray
    pose: tuple  # ((x, y), heading)
    offsets: np.ndarray
    max_range: float


@dataclass
class ObservableSet:
    """Obstacle points within ``radius_d`` of the ego position.

    Reach-box corners appended by ``augment_with_reach`` may exceed
    ``radius_d`` by up to the box half-diagonal (the box is selected by its
    center).  ``empty`` flags free space, which is a signal, not an error.
    """

    points: PointCloud
    radius_d: float

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0


def _pose_of(ego_pose):
    if hasattr(ego_pose, "heading"):  # VehicleState-like
        return (float(ego_pose.x), float(ego_pose.y)), float(ego_pose.heading)
    (xy, heading) = ego_pose
    p = as_xy(xy)
    return (float(p[0]), float(p[1])), float(heading)


def scan(ego_pose, scenario, config: LidarConfig) -> LidarScan:
    """Cast all beams against the scenario geometry.

    ``ego_pose`` is a VehicleState or an ((x, y), heading) pair; the pose
    must lie inside the drivable region.
    """
    (x, y), heading = _pose_of(ego_pose)
    offsets = config.offsets()
    angles = heading + offsets
    seg_a, seg_b = scenario.segments
    ranges = kernels.ray_segment_ranges(
        x, y, np.cos(angles), np.sin(angles),
        seg_a[:, 0], seg_a[:, 1], seg_b[:, 0], seg_b[:, 1],
        config.max_range,
    )
    return LidarScan(ranges, ((x, y), heading), offsets, config.max_range)


def scan_to_points(s: LidarScan) -> PointCloud:
    """Convert hits to world-frame points; beams at max range are dropped."""
    hit = s.ranges < s.max_range
    (x, y), heading = s.pose
    angles = heading + s.offsets[hit]
    r = s.ranges[hit]
    return np.column_stack([x + r * np.cos(angles), y + r * np.sin(angles)])


def rdp_simplify(points: PointCloud, epsilon: float) -> PointCloud:
    """Ramer-Douglas-Peucker simplification of a scan-ordered polyline.

    Every dropped point lies within ``epsilon`` of the simplified polyline.
    ``epsilon == 0`` returns the polyline unchanged.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        raise ValueError("need at least 2 points")
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0.0:
        return pts.copy()
    keep = kernels.rdp_mask(pts[:, 0], pts[:, 1], epsilon)
    return pts[keep]


def observable_static(points: PointCloud, ego, d: float) -> ObservableSet:
    """Filter points to those within distance ``d`` of the ego (closed)."""
    if d <= 0.0:
        raise ValueError("observable radius d must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    e = as_xy(ego)
    dist = np.linalg.norm(pts - e[None, :], axis=1)
    return ObservableSet(pts[dist <= d], float(d))


def augment_with_reach(q: ObservableSet, tubes, ego, d: float) -> ObservableSet:
    """Append the corners of every reach box whose center is within ``d``."""
    e = as_xy(ego)
    extra = []
    for tube in tubes:
        for _, box in tube.steps:
            c = box.center
            if math.hypot(c.x - e[0], c.y - e[1]) <= d:
                extra.append(box.corners())
    if not extra:
        return ObservableSet(q.points.copy(), q.radius_d)
    pts = np.vstack([q.points.reshape(-1, 2)] + extra)
    return ObservableSet(pts, q.radius_d)
