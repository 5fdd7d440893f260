"""Tracks, static obstacles, scenario files and exact ray casting.

Tracks are stored as polyline boundaries (no occupancy grids), so ray casting
is exact up to the polyline discretisation.  Each track also carries an
arc-length parameterized centerline with precomputed projections onto both
borders, which the corridor baseline and the pure-pursuit planner consume.

Scenario files are YAML (schema documented in the README, versioned with a
``format_version`` field).  Unknown fields are ignored with a warning;
malformed input raises ParseError, invariant violations raise
ValidationError naming the invariant.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
import yaml

from . import kernels
from .control import VehicleState
from .errors import ParseError, ValidationError
from .geom import OrientedRect, Point2, as_xy, rect_overlap

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

#: defaults for agents that do not specify a footprint
DEFAULT_FOOTPRINT = (0.5, 0.3)

_CENTERLINE_STEP = 0.1
_BOUNDARY_RDP_EPS = 0.003


def _polyline_lengths(points: np.ndarray, closed: bool) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    seg = np.diff(np.vstack([p, p[:1]]) if closed else p, axis=0)
    return np.linalg.norm(seg, axis=1)


def _resample_closed(points: np.ndarray, step: float) -> np.ndarray:
    """Resample a closed polyline at roughly uniform arc-length spacing."""
    p = np.asarray(points, dtype=np.float64)
    seg_len = _polyline_lengths(p, closed=True)
    s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s[-1]
    n = max(int(round(total / step)), 8)
    samples = np.linspace(0.0, total, n, endpoint=False)
    ring = np.vstack([p, p[:1]])
    out = np.empty((n, 2))
    out[:, 0] = np.interp(samples, s, ring[:, 0])
    out[:, 1] = np.interp(samples, s, ring[:, 1])
    return out


def _tangents_normals(center: np.ndarray):
    """Unit tangents and left normals of a closed centerline (central diffs)."""
    nxt = np.roll(center, -1, axis=0)
    prv = np.roll(center, 1, axis=0)
    t = nxt - prv
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    left = np.column_stack([-t[:, 1], t[:, 0]])
    return t, left


def _signed_area(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _decimate_closed(points: np.ndarray, eps: float) -> np.ndarray:
    """RDP-decimate a closed polyline (endpoints pinned at index 0)."""
    ring = np.vstack([points, points[:1]])
    keep = kernels.rdp_mask(ring[:, 0], ring[:, 1], eps)
    out = ring[keep]
    return out[:-1]


def _segments_intersect(a1, a2, b1, b2) -> np.ndarray:
    """Vectorized proper-intersection test between segment batches."""
    d1 = a2 - a1
    d2 = b2 - b1
    denom = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    w = b1 - a1
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, 0] * d2[:, 1] - w[:, 1] * d2[:, 0]) / denom
        u = (w[:, 0] * d1[:, 1] - w[:, 1] * d1[:, 0]) / denom
    eps = 1e-12
    return (np.abs(denom) > eps) & (t > eps) & (t < 1 - eps) & (u > eps) & (u < 1 - eps)


def _is_simple_closed(points: np.ndarray) -> bool:
    """True if the closed polyline has no self-intersections."""
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    a1 = p
    a2 = np.roll(p, -1, axis=0)
    idx_i, idx_j = np.triu_indices(n, k=2)
    # skip the wrap-around adjacency (first vs last segment)
    mask = ~((idx_i == 0) & (idx_j == n - 1))
    idx_i, idx_j = idx_i[mask], idx_j[mask]
    hits = _segments_intersect(a1[idx_i], a2[idx_i], a1[idx_j], a2[idx_j])
    return not bool(hits.any())


@dataclass
class Track:
    """Closed race track: boundaries plus an arc-length centerline table.

    ``centerline``, ``left_border`` and ``right_border`` are parallel (K, 2)
    sample arrays; ``s`` holds each sample's arc length.  Left/right are
    relative to the direction of increasing ``s``.
    """

    centerline: np.ndarray
    s: np.ndarray
    left_border: np.ndarray
    right_border: np.ndarray
    inner_boundary: np.ndarray
    outer_boundary: np.ndarray
    total_length: float
    name: str | None = None
    # source data the track was built from, kept so saved scenarios rebuild
    # bit-identical tracks on reload
    source_centerline: np.ndarray | None = None
    half_width: float | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def from_centerline(
        cls, points, half_width: float, name: str | None = None
    ) -> "Track":
        """Build a constant-width track from a closed centerline polyline."""
        source = np.asarray(points, dtype=np.float64)
        center = _resample_closed(source, _CENTERLINE_STEP)
        if _signed_area(center) < 0.0:
            center = center[::-1].copy()  # enforce counter-clockwise
        tang, left_n = _tangents_normals(center)
        left = center + half_width * left_n
        right = center - half_width * left_n
        seg = _polyline_lengths(center, closed=True)
        s = np.concatenate([[0.0], np.cumsum(seg[:-1])])
        inner = _decimate_closed(left, _BOUNDARY_RDP_EPS)
        outer = _decimate_closed(right, _BOUNDARY_RDP_EPS)
        return cls(
            centerline=center,
            s=s,
            left_border=left,
            right_border=right,
            inner_boundary=inner,
            outer_boundary=outer,
            total_length=float(s[-1] + seg[-1]),
            name=name,
            source_centerline=source,
            half_width=float(half_width),
        )

    @classmethod
    def from_boundaries(cls, inner, outer, centerline=None, name=None) -> "Track":
        """Build from explicit boundary polygons.

        If no centerline is given it is derived by pairing outer-boundary
        samples with their nearest inner point.  Border projections are then
        recomputed by casting centerline normals at every 0.1 m sample.
        """
        inner = np.asarray(inner, dtype=np.float64)
        outer = np.asarray(outer, dtype=np.float64)
        source = None if centerline is None else np.asarray(centerline, dtype=np.float64)
        if centerline is None:
            dense_outer = _resample_closed(outer, _CENTERLINE_STEP)
            dense_inner = _resample_closed(inner, _CENTERLINE_STEP / 2)
            d = dense_outer[:, None, :] - dense_inner[None, :, :]
            nearest = dense_inner[np.argmin((d ** 2).sum(-1), axis=1)]
            centerline = 0.5 * (dense_outer + nearest)
        center = _resample_closed(np.asarray(centerline, dtype=np.float64), _CENTERLINE_STEP)
        if _signed_area(center) < 0.0:
            center = center[::-1].copy()
        tang, left_n = _tangents_normals(center)
        seg = _polyline_lengths(center, closed=True)
        s = np.concatenate([[0.0], np.cumsum(seg[:-1])])

        seg_a, seg_b = _boundary_segments(inner, outer)
        left = np.empty_like(center)
        right = np.empty_like(center)
        for i in range(len(center)):
            for sign, dest in ((1.0, left), (-1.0, right)):
                n = sign * left_n[i]
                r = kernels.ray_segment_ranges(
                    center[i, 0], center[i, 1],
                    np.array([n[0]]), np.array([n[1]]),
                    seg_a[:, 0], seg_a[:, 1], seg_b[:, 0], seg_b[:, 1],
                    1e6,
                )[0]
                if r >= 1e6:
                    raise ValidationError(
                        "centerline lies strictly between boundaries: normal ray "
                        f"at s={s[i]:.2f} does not hit a border"
                    )
                dest[i] = center[i] + r * n
        return cls(
            centerline=center,
            s=s,
            left_border=left,
            right_border=right,
            inner_boundary=inner,
            outer_boundary=outer,
            total_length=float(s[-1] + seg[-1]),
            name=name,
            source_centerline=source,
        )

    # -- queries -----------------------------------------------------------

    def point_at(self, s: float) -> np.ndarray:
        """Centerline point at arc length ``s`` (wraps around)."""
        s = float(s) % self.total_length
        grid = np.concatenate([self.s, [self.total_length]])
        ring = np.vstack([self.centerline, self.centerline[:1]])
        return np.array(
            [np.interp(s, grid, ring[:, 0]), np.interp(s, grid, ring[:, 1])]
        )

    def heading_at(self, s: float) -> float:
        ahead = self.point_at(s + 0.05)
        behind = self.point_at(s - 0.05)
        return math.atan2(ahead[1] - behind[1], ahead[0] - behind[0])

    def left_normal_at(self, s: float) -> np.ndarray:
        h = self.heading_at(s)
        return np.array([-math.sin(h), math.cos(h)])

    def frame(self, p):
        """Nearest centerline sample with its border projections.

        Returns (s, center point, left border point, right border point);
        distance ties resolve to the smaller s.
        """
        q = as_xy(p)
        d2 = ((self.centerline - q) ** 2).sum(axis=1)
        i = int(np.argmin(d2))  # first minimum = smallest s on ties
        return (
            float(self.s[i]),
            Point2(*self.centerline[i]),
            Point2(*self.left_border[i]),
            Point2(*self.right_border[i]),
        )

    def contains(self, p) -> bool:
        """True if p lies in the drivable annulus (obstacles not considered)."""
        q = as_xy(p)
        px, py = np.array([q[0]]), np.array([q[1]])
        in_outer = kernels.points_in_polygon(
            px, py, self.outer_boundary[:, 0], self.outer_boundary[:, 1]
        )[0]
        in_inner = kernels.points_in_polygon(
            px, py, self.inner_boundary[:, 0], self.inner_boundary[:, 1]
        )[0]
        return bool(in_outer and not in_inner)


def _boundary_segments(*polygons):
    a_parts, b_parts = [], []
    for poly in polygons:
        p = np.asarray(poly, dtype=np.float64)
        a_parts.append(p)
        b_parts.append(np.roll(p, -1, axis=0))
    return np.vstack(a_parts), np.vstack(b_parts)


@dataclass
class StaticObstacle:
    """A simple polygon blocking part of the drivable region."""

    polygon: np.ndarray

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise ValidationError("obstacle polygon needs at least 3 vertices")
        if not _is_simple_closed(poly):
            raise ValidationError("obstacle polygon must be simple (non-self-intersecting)")
        self.polygon = poly


@dataclass
class AgentSpec:
    """One agent of a scenario: start state, controller and footprint."""

    state: VehicleState
    controller: str = "pp"
    planner: str = "pp"
    method: str = "constrained"
    objective: str = "sat"
    footprint_length: float = DEFAULT_FOOTPRINT[0]
    footprint_width: float = DEFAULT_FOOTPRINT[1]
    target_speed: float = 3.0


@dataclass
class Scenario:
    """Immutable-after-load description of one closed-loop experiment."""

    track: Track
    static_obstacles: list
    agents: list
    seed: int = 0
    duration: float = 60.0
    jitter_along: float = 0.0
    jitter_lateral: float = 0.0

    def __post_init__(self):
        segs = [
            _boundary_segments(self.track.inner_boundary, self.track.outer_boundary)
        ]
        for obs in self.static_obstacles:
            segs.append(_boundary_segments(obs.polygon))
        self._seg_a = np.vstack([s[0] for s in segs])
        self._seg_b = np.vstack([s[1] for s in segs])

    @property
    def segments(self):
        """All boundary + obstacle edges as ((S, 2), (S, 2)) endpoint arrays."""
        return self._seg_a, self._seg_b

    def drivable(self, p) -> bool:
        """Inside the track annulus and outside every static obstacle."""
        q = as_xy(p)
        if not self.track.contains(q):
            return False
        for obs in self.static_obstacles:
            if kernels.points_in_polygon(
                np.array([q[0]]), np.array([q[1]]),
                obs.polygon[:, 0], obs.polygon[:, 1],
            )[0]:
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        track_eq = (
            np.array_equal(self.track.centerline, other.track.centerline)
            and np.array_equal(self.track.inner_boundary, other.track.inner_boundary)
            and np.array_equal(self.track.outer_boundary, other.track.outer_boundary)
        )
        obs_eq = len(self.static_obstacles) == len(other.static_obstacles) and all(
            np.array_equal(a.polygon, b.polygon)
            for a, b in zip(self.static_obstacles, other.static_obstacles)
        )
        return (
            track_eq
            and obs_eq
            and self.agents == other.agents
            and self.seed == other.seed
            and self.duration == other.duration
            and self.jitter_along == other.jitter_along
            and self.jitter_lateral == other.jitter_lateral
        )


# ---------------------------------------------------------------------------
# Bundled tracks
# ---------------------------------------------------------------------------


def _chicane_offset(u: np.ndarray, amplitude: float) -> np.ndarray:
    """Smooth S-shaped lateral offset on u in [0, 1], zero value/slope at ends."""
    return amplitude * np.sin(2.0 * np.pi * u) * np.sin(np.pi * u) ** 2


def _stadium_centerline(straight: float, radius: float, chicanes=(), step=0.02):
    """Counter-clockwise stadium loop with optional chicanes on the straights.

    Chicanes are (straight_index in {0, 1}, start_frac, length_frac, amplitude).
    """
    per_straight = straight
    per_arc = math.pi * radius
    total = 2 * per_straight + 2 * per_arc
    n = int(total / step)
    ss = np.linspace(0.0, total, n, endpoint=False)
    pts = np.empty((n, 2))
    for i, sv in enumerate(ss):
        if sv < per_straight:  # bottom straight, heading +x
            u, lateral = sv / per_straight, 0.0
            for idx, f0, fl, amp in chicanes:
                if idx == 0 and f0 <= u <= f0 + fl:
                    lateral = _chicane_offset(np.array([(u - f0) / fl]), amp)[0]
            pts[i] = (sv, lateral)
        elif sv < per_straight + per_arc:  # right arc
            a = (sv - per_straight) / radius - math.pi / 2
            pts[i] = (straight + radius * math.cos(a), radius + radius * math.sin(a))
        elif sv < 2 * per_straight + per_arc:  # top straight, heading -x
            d = sv - per_straight - per_arc
            u, lateral = d / per_straight, 0.0
            for idx, f0, fl, amp in chicanes:
                if idx == 1 and f0 <= u <= f0 + fl:
                    lateral = _chicane_offset(np.array([(u - f0) / fl]), amp)[0]
            pts[i] = (straight - d, 2 * radius - lateral)
        else:  # left arc
            a = (sv - 2 * per_straight - per_arc) / radius + math.pi / 2
            pts[i] = (radius * math.cos(a), radius + radius * math.sin(a))
    return pts


def porto_like_track() -> Track:
    """Short oval with one chicane (authored for this repo)."""
    pts = _stadium_centerline(
        straight=14.0, radius=4.0, chicanes=[(0, 0.30, 0.55, 0.55)]
    )
    return Track.from_centerline(pts, half_width=1.6, name="porto-like")


def walker_like_track() -> Track:
    """Longer loop with more corners: bigger stadium plus two chicanes."""
    pts = _stadium_centerline(
        straight=22.0,
        radius=5.0,
        chicanes=[(0, 0.18, 0.42, 0.7), (1, 0.45, 0.40, -0.8)],
    )
    return Track.from_centerline(pts, half_width=1.8, name="walker-like")


BUNDLED_TRACKS = {
    "porto-like": porto_like_track,
    "walker-like": walker_like_track,
}

_track_cache: dict = {}


def get_track(name: str) -> Track:
    if name not in BUNDLED_TRACKS:
        raise ParseError(f"unknown bundled track {name!r}; have {sorted(BUNDLED_TRACKS)}")
    if name not in _track_cache:
        _track_cache[name] = BUNDLED_TRACKS[name]()
    return _track_cache[name]


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


def raycast(origin, angle: float, scenario: Scenario, max_range: float) -> float:
    """Distance from origin along ``angle`` to the nearest boundary or
    obstacle edge; ``max_range`` when nothing is hit within range."""
    o = as_xy(origin)
    seg_a, seg_b = scenario.segments
    r = kernels.ray_segment_ranges(
        float(o[0]), float(o[1]),
        np.array([math.cos(angle)]), np.array([math.sin(angle)]),
        seg_a[:, 0], seg_a[:, 1], seg_b[:, 0], seg_b[:, 1],
        float(max_range),
    )
    return float(r[0])


def centerline_frame(track: Track, p):
    """(s, centerline point, left border point, right border point) at the
    nearest centerline sample; ties resolve to the smaller s."""
    return track.frame(p)


# ---------------------------------------------------------------------------
# Scenario file I/O
# ---------------------------------------------------------------------------

_KNOWN_TOP = {
    "format_version", "seed", "duration", "track", "agents", "obstacles",
    "start_jitter",
}
_KNOWN_TRACK = {"name", "centerline", "half_width", "inner_boundary", "outer_boundary"}
_KNOWN_AGENT = {
    "start", "controller", "planner", "method", "objective", "footprint",
    "target_speed",
}


def _warn_unknown(mapping: dict, known: set, where: str):
    for key in mapping:
        if key not in known:
            logger.warning("ignoring unknown field %r in %s", key, where)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ParseError(f"missing required field {key!r} in {where}")
    return mapping[key]


def _parse_track(spec) -> Track:
    if isinstance(spec, str):
        return get_track(spec)
    if not isinstance(spec, dict):
        raise ParseError("track must be a name or a mapping")
    _warn_unknown(spec, _KNOWN_TRACK, "track")
    if "name" in spec:
        return get_track(str(spec["name"]))
    if "centerline" in spec and "half_width" in spec:
        try:
            return Track.from_centerline(spec["centerline"], float(spec["half_width"]))
        except (TypeError, ValueError) as e:
            raise ParseError(f"bad centerline track spec: {e}") from e
    # explicit boundary form: both boundaries required
    inner = _require(spec, "inner_boundary", "track")
    outer = _require(spec, "outer_boundary", "track")
    try:
        return Track.from_boundaries(inner, outer, spec.get("centerline"))
    except (TypeError, ValueError) as e:
        raise ParseError(f"bad boundary track spec: {e}") from e


def _parse_agent(spec: dict, track: Track, idx: int) -> AgentSpec:
    if not isinstance(spec, dict):
        raise ParseError(f"agent #{idx} must be a mapping")
    _warn_unknown(spec, _KNOWN_AGENT, f"agent #{idx}")
    start = _require(spec, "start", f"agent #{idx}")
    if not isinstance(start, dict):
        raise ParseError(f"agent #{idx} start must be a mapping")
    try:
        if "s" in start:
            s = float(start["s"])
            lateral = float(start.get("lateral", 0.0))
            pos = track.point_at(s) + lateral * track.left_normal_at(s)
            state = VehicleState(
                float(pos[0]), float(pos[1]),
                track.heading_at(s), float(start.get("speed", 0.0)),
            )
        else:
            state = VehicleState(
                float(start["x"]), float(start["y"]),
                float(start.get("heading", 0.0)), float(start.get("speed", 0.0)),
            )
    except KeyError as e:
        raise ParseError(f"agent #{idx} start missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ParseError(f"agent #{idx} start malformed: {e}") from e
    foot = spec.get("footprint", {})
    return AgentSpec(
        state=state,
        controller=str(spec.get("controller", "pp")),
        planner=str(spec.get("planner", "pp")),
        method=str(spec.get("method", "constrained")),
        objective=str(spec.get("objective", "sat")),
        footprint_length=float(foot.get("length", DEFAULT_FOOTPRINT[0])),
        footprint_width=float(foot.get("width", DEFAULT_FOOTPRINT[1])),
        target_speed=float(spec.get("target_speed", 3.0)),
    )


def validate_scenario(scenario: Scenario) -> None:
    """Check the documented invariants; raises ValidationError naming them."""
    track = scenario.track
    if not _is_simple_closed(track.inner_boundary):
        raise ValidationError("boundaries are simple: inner boundary self-intersects")
    if not _is_simple_closed(track.outer_boundary):
        raise ValidationError("boundaries are simple: outer boundary self-intersects")
    inside = kernels.points_in_polygon(
        track.inner_boundary[:, 0], track.inner_boundary[:, 1],
        track.outer_boundary[:, 0], track.outer_boundary[:, 1],
    )
    if not inside.all():
        raise ValidationError("inner boundary strictly inside outer: violated")
    mid = kernels.points_in_polygon(
        track.centerline[:, 0], track.centerline[:, 1],
        track.outer_boundary[:, 0], track.outer_boundary[:, 1],
    )
    mid_in_inner = kernels.points_in_polygon(
        track.centerline[:, 0], track.centerline[:, 1],
        track.inner_boundary[:, 0], track.inner_boundary[:, 1],
    )
    if not (mid.all() and not mid_in_inner.any()):
        raise ValidationError("centerline lies strictly between boundaries: violated")

    if len(scenario.agents) < 1:
        raise ValidationError("scenario needs at least one agent")

    for obs in scenario.static_obstacles:
        for v in obs.polygon:
            if not scenario.track.contains(v):
                raise ValidationError(
                    "static obstacles lie fully inside the drivable region: violated"
                )

    rects = []
    for i, agent in enumerate(scenario.agents):
        rect = OrientedRect(
            agent.state.position, agent.state.heading,
            agent.footprint_length, agent.footprint_width,
        )
        for corner in rect.corners():
            if not scenario.drivable(corner):
                raise ValidationError(
                    f"agents start inside the track: agent #{i} footprint leaves "
                    "the drivable region"
                )
        rects.append(rect)
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            if rect_overlap(rects[i], rects[j]):
                raise ValidationError(
                    f"agents start collision-free: agents #{i} and #{j} overlap"
                )


def load_scenario(path) -> Scenario:
    """Parse and invariant-check a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ParseError(f"malformed YAML in {path}: {e}") from e
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    _warn_unknown(raw, _KNOWN_TOP, "scenario")

    track = _parse_track(_require(raw, "track", "scenario"))
    agents_raw = _require(raw, "agents", "scenario")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ParseError("agents must be a non-empty list")
    agents = [_parse_agent(a, track, i) for i, a in enumerate(agents_raw)]

    obstacles = []
    for i, poly in enumerate(raw.get("obstacles", []) or []):
        try:
            obstacles.append(StaticObstacle(np.asarray(poly, dtype=np.float64)))
        except (TypeError, ValueError) as e:
            raise ParseError(f"obstacle #{i} malformed: {e}") from e

    jitter = raw.get("start_jitter", {}) or {}
    try:
        scenario = Scenario(
            track=track,
            static_obstacles=obstacles,
            agents=agents,
            seed=int(raw.get("seed", 0)),
            duration=float(raw.get("duration", 60.0)),
            jitter_along=float(jitter.get("along", 0.0)),
            jitter_lateral=float(jitter.get("lateral", 0.0)),
        )
    except (TypeError, ValueError) as e:
        raise ParseError(f"malformed scenario fields: {e}") from e
    validate_scenario(scenario)
    return scenario


def save_scenario(scenario: Scenario, path) -> None:
    """Write a scenario back out; load(save(x)) == x."""
    track = scenario.track
    if track.name is not None:
        track_spec = {"name": track.name}
    elif track.half_width is not None:
        track_spec = {
            "centerline": track.source_centerline.tolist(),
            "half_width": track.half_width,
        }
    else:
        track_spec = {
            "inner_boundary": track.inner_boundary.tolist(),
            "outer_boundary": track.outer_boundary.tolist(),
        }
        if track.source_centerline is not None:
            track_spec["centerline"] = track.source_centerline.tolist()
    doc = {
        "format_version": FORMAT_VERSION,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "track": track_spec,
        "start_jitter": {
            "along": scenario.jitter_along,
            "lateral": scenario.jitter_lateral,
        },
        "agents": [
            {
                "start": {
                    "x": a.state.x,
                    "y": a.state.y,
                    "heading": a.state.heading,
                    "speed": a.state.v,
                },
                "controller": a.controller,
                "planner": a.planner,
                "method": a.method,
                "objective": a.objective,
                "footprint": {"length": a.footprint_length, "width": a.footprint_width},
                "target_speed": a.target_speed,
            }
            for a in scenario.agents
        ],
        "obstacles": [obs.polygon.tolist() for obs in scenario.static_obstacles],
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)
