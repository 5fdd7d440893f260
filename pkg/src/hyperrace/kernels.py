"""Hot numeric kernels with numba-accelerated and pure-numpy implementations.

The closed-loop simulator spends most of its time casting LiDAR rays against
track geometry, simplifying scans and testing collision geometry.  Each of
those inner loops exists here twice:

* a loop-style implementation compiled with ``numba.njit`` (used by default),
* a vectorised pure-numpy fallback.

Set the environment variable ``HYPERRACE_DISABLE_NUMBA=1`` before import to
select the numpy path (the flag is read once, at import time).  The numpy
path is also used automatically when numba is not installed.  Both paths
compute the same formulas; ``benchmarks/bench_kernels.py`` compares them.
"""

import os

import numpy as np

_FLAG = os.environ.get("HYPERRACE_DISABLE_NUMBA", "0").strip().lower()
_WANT_NUMBA = _FLAG not in ("1", "true", "yes", "on")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env-flag path
    _HAVE_NUMBA = False

NUMBA_ENABLED = _WANT_NUMBA and _HAVE_NUMBA

_PARALLEL_EPS = 1e-14


# ---------------------------------------------------------------------------
# Ray casting: many rays against many segments
# ---------------------------------------------------------------------------


def ray_segment_ranges_numpy(ox, oy, cos_a, sin_a, ax, ay, bx, by, max_range):
    """Distance from (ox, oy) along each ray direction to the nearest segment.

    Rays that hit nothing within ``max_range`` get exactly ``max_range``.

    Parameters
    ----------
    ox, oy : float
        Ray origin.
    cos_a, sin_a : (M,) arrays
        Unit direction of each ray.
    ax, ay, bx, by : (S,) arrays
        Segment endpoints.
    max_range : float
        No-hit sentinel distance.
    """
    dx = cos_a[:, None]  # (M, 1)
    dy = sin_a[:, None]
    ex = (bx - ax)[None, :]  # (1, S)
    ey = (by - ay)[None, :]
    wx = (ax - ox)[None, :]
    wy = (ay - oy)[None, :]

    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        u = (wx * dy - wy * dx) / denom
    valid = (np.abs(denom) > _PARALLEL_EPS) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    return np.minimum(t.min(axis=1), max_range)


def _ray_segment_ranges_loop(ox, oy, cos_a, sin_a, ax, ay, bx, by, max_range):
    m = cos_a.shape[0]
    s = ax.shape[0]
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        dxi = cos_a[i]
        dyi = sin_a[i]
        best = max_range
        for j in range(s):
            ex = bx[j] - ax[j]
            ey = by[j] - ay[j]
            denom = dxi * ey - dyi * ex
            if abs(denom) <= _PARALLEL_EPS:
                continue
            wx = ax[j] - ox
            wy = ay[j] - oy
            t = (wx * ey - wy * ex) / denom
            if t < 0.0 or t >= best:
                continue
            u = (wx * dyi - wy * dxi) / denom
            if 0.0 <= u <= 1.0:
                best = t
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# Point-in-polygon (even-odd rule)
# ---------------------------------------------------------------------------


def points_in_polygon_numpy(px, py, vx, vy):
    """Even-odd containment test of points against one closed polygon.

    ``vx, vy`` hold the polygon vertices without a repeated closing vertex.
    Points exactly on an edge may land on either side; callers that care use
    tolerances on top of this test.
    """
    x1 = vx[None, :]  # (1, V)
    y1 = vy[None, :]
    x2 = np.roll(vx, -1)[None, :]
    y2 = np.roll(vy, -1)[None, :]
    p_x = np.asarray(px, dtype=np.float64)[:, None]
    p_y = np.asarray(py, dtype=np.float64)[:, None]

    crosses_y = (y1 > p_y) != (y2 > p_y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at_y = x1 + (p_y - y1) * (x2 - x1) / (y2 - y1)
    hits = crosses_y & (p_x < x_at_y)
    return hits.sum(axis=1) % 2 == 1


def _points_in_polygon_loop(px, py, vx, vy):
    n = px.shape[0]
    v = vx.shape[0]
    out = np.empty(n, dtype=np.bool_)
    for i in range(n):
        x = px[i]
        y = py[i]
        inside = False
        for j in range(v):
            x1 = vx[j]
            y1 = vy[j]
            k = j + 1 if j + 1 < v else 0
            x2 = vx[k]
            y2 = vy[k]
            if (y1 > y) != (y2 > y):
                x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < x_at:
                    inside = not inside
        out[i] = inside
    return out


# ---------------------------------------------------------------------------
# Ramer-Douglas-Peucker keep-mask
# ---------------------------------------------------------------------------


def _rdp_mask_loop(x, y, eps):
    n = x.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    keep[0] = True
    keep[n - 1] = True
    # explicit stack instead of recursion
    stack = np.empty((n, 2), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n - 1
    top = 1
    while top > 0:
        top -= 1
        first = stack[top, 0]
        last = stack[top, 1]
        if last - first < 2:
            continue
        x1 = x[first]
        y1 = y[first]
        ex = x[last] - x1
        ey = y[last] - y1
        seg_len2 = ex * ex + ey * ey
        d_max = -1.0
        idx = first
        for i in range(first + 1, last):
            wx = x[i] - x1
            wy = y[i] - y1
            if seg_len2 > 0.0:
                t = (wx * ex + wy * ey) / seg_len2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                rx = wx - t * ex
                ry = wy - t * ey
            else:
                rx = wx
                ry = wy
            d = np.sqrt(rx * rx + ry * ry)
            if d > d_max:
                d_max = d
                idx = i
        if d_max > eps:
            keep[idx] = True
            stack[top, 0] = first
            stack[top, 1] = idx
            top += 1
            stack[top, 0] = idx
            stack[top, 1] = last
            top += 1
    return keep


def rdp_mask_numpy(x, y, eps):
    """Keep-mask of the Ramer-Douglas-Peucker simplification (numpy path)."""
    return _rdp_mask_loop(np.asarray(x, float), np.asarray(y, float), float(eps))


# ---------------------------------------------------------------------------
# Segment vs oriented-rectangle overlap (wall-contact checks)
# ---------------------------------------------------------------------------


def segments_hit_rect_numpy(ax, ay, bx, by, cx, cy, cos_h, sin_h, half_l, half_w):
    """True if any segment intersects the oriented rectangle.

    Segments are transformed into the rectangle frame and clipped against the
    axis-aligned box (Liang-Barsky slabs); endpoint containment is covered by
    the clip itself.
    """
    # rotate into the rect frame
    rax = (ax - cx) * cos_h + (ay - cy) * sin_h
    ray_ = -(ax - cx) * sin_h + (ay - cy) * cos_h
    rbx = (bx - cx) * cos_h + (by - cy) * sin_h
    rby = -(bx - cx) * sin_h + (by - cy) * cos_h

    dx = rbx - rax
    dy = rby - ray_
    t0 = np.zeros_like(rax)
    t1 = np.ones_like(rax)
    alive = np.ones(rax.shape, dtype=bool)
    for p, q in (
        (-dx, rax + half_l),
        (dx, half_l - rax),
        (-dy, ray_ + half_w),
        (dy, half_w - ray_),
    ):
        parallel = p == 0.0
        alive &= ~(parallel & (q < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = q / p
        ent = ~parallel & (p < 0.0)
        ext = ~parallel & (p > 0.0)
        t0 = np.where(ent, np.maximum(t0, r), t0)
        t1 = np.where(ext, np.minimum(t1, r), t1)
    return bool(np.any(alive & (t0 <= t1)))


def _segments_hit_rect_loop(ax, ay, bx, by, cx, cy, cos_h, sin_h, half_l, half_w):
    n = ax.shape[0]
    for i in range(n):
        rax = (ax[i] - cx) * cos_h + (ay[i] - cy) * sin_h
        ray_ = -(ax[i] - cx) * sin_h + (ay[i] - cy) * cos_h
        rbx = (bx[i] - cx) * cos_h + (by[i] - cy) * sin_h
        rby = -(bx[i] - cx) * sin_h + (by[i] - cy) * cos_h
        dx = rbx - rax
        dy = rby - ray_
        t0 = 0.0
        t1 = 1.0
        ok = True
        for k in range(4):
            if k == 0:
                p = -dx
                q = rax + half_l
            elif k == 1:
                p = dx
                q = half_l - rax
            elif k == 2:
                p = -dy
                q = ray_ + half_w
            else:
                p = dy
                q = half_w - ray_
            if p == 0.0:
                if q < 0.0:
                    ok = False
                    break
            else:
                r = q / p
                if p < 0.0:
                    if r > t0:
                        t0 = r
                else:
                    if r < t1:
                        t1 = r
                if t0 > t1:
                    ok = False
                    break
        if ok:
            return True
    return False


# ---------------------------------------------------------------------------
# Implementation selection
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    ray_segment_ranges_numba = njit(cache=True)(_ray_segment_ranges_loop)
    points_in_polygon_numba = njit(cache=True)(_points_in_polygon_loop)
    rdp_mask_numba = njit(cache=True)(_rdp_mask_loop)
    segments_hit_rect_numba = njit(cache=True)(_segments_hit_rect_loop)
else:  # pragma: no cover
    ray_segment_ranges_numba = None
    points_in_polygon_numba = None
    rdp_mask_numba = None
    segments_hit_rect_numba = None

if NUMBA_ENABLED:
    ray_segment_ranges = ray_segment_ranges_numba
    points_in_polygon = points_in_polygon_numba
    _rdp_mask = rdp_mask_numba
    segments_hit_rect = segments_hit_rect_numba
else:
    ray_segment_ranges = ray_segment_ranges_numpy
    points_in_polygon = points_in_polygon_numpy
    _rdp_mask = rdp_mask_numpy
    segments_hit_rect = segments_hit_rect_numpy


def rdp_mask(x, y, eps):
    """Keep-mask of the Ramer-Douglas-Peucker simplification (selected path)."""
    return _rdp_mask(np.asarray(x, np.float64), np.asarray(y, np.float64), float(eps))


def warmup():
    """Trigger jit compilation of all kernels (no-op on the numpy path)."""
    one = np.array([0.0])
    ray_segment_ranges(0.0, 0.0, one, one, one, one, one + 1.0, one + 1.0, 2.0)
    points_in_polygon(one, one, np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    rdp_mask(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.0, 0.0]), 0.1)
    segments_hit_rect(one, one, one + 1.0, one + 1.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.5)
