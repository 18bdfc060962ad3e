"""Vectorized 2-D geometry primitives shared by the map, sampler and metrics."""

import numpy as np

BOUNDARY_EPS = 1e-9


def wrap_angle(angle):
    """Wrap angles to [-pi, pi]."""
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def cross2(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def rotation(theta):
    """Matrix rotating vectors by ``theta`` (counter-clockwise)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def to_local(points, origin, heading):
    """Express scene-frame points in a frame at ``origin`` whose x-axis points along ``heading``."""
    c, s = np.cos(heading), np.sin(heading)
    d = np.asarray(points, dtype=float) - origin
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


def to_global(points, origin, heading):
    c, s = np.cos(heading), np.sin(heading)
    p = np.asarray(points, dtype=float)
    return np.stack([c * p[..., 0] - s * p[..., 1], s * p[..., 0] + c * p[..., 1]], axis=-1) + origin


def project_on_segments(points, starts, ends):
    """Closest points from every point to every segment.

    Returns ``(dist, t, foot)`` with shapes (N, M), (N, M), (N, M, 2); ``t`` is the
    clamped parameter in [0, 1].
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    a = np.asarray(starts, dtype=float).reshape(-1, 2)
    b = np.asarray(ends, dtype=float).reshape(-1, 2)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    ap = p[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("nmk,mk->nm", ap, ab) / denom
    t = np.clip(np.nan_to_num(t), 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * ab[None, :, :]
    dist = np.hypot(p[:, None, 0] - foot[..., 0], p[:, None, 1] - foot[..., 1])
    return dist, t, foot


def point_segment_distance(points, starts, ends):
    return project_on_segments(points, starts, ends)[0]


def polyline_distance(points, polyline):
    """Distance from each point to a polyline (minimum over its chords)."""
    poly = np.asarray(polyline, dtype=float)
    return point_segment_distance(points, poly[:-1], poly[1:]).min(axis=1)


def points_in_polygon(points, polygon, eps=BOUNDARY_EPS):
    """Even-odd ray casting; points within ``eps`` of an edge count as inside."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    v = np.asarray(polygon, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    x = p[:, 0:1]
    y = p[:, 1:2]
    ay, by = a[None, :, 1], b[None, :, 1]
    ax, bx = a[None, :, 0], b[None, :, 0]
    straddle = (ay > y) != (by > y)
    with np.errstate(invalid="ignore", divide="ignore"):
        x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
    crossings = straddle & (x < x_cross)
    inside = (np.count_nonzero(crossings, axis=1) % 2) == 1
    on_edge = point_segment_distance(p, a, b).min(axis=1) <= eps
    return inside | on_edge


def _orient(a, b, c):
    return cross2(b - a, c - a)


def segments_intersect(p1, p2, q1, q2):
    """Proper or touching intersection test for two closed segments."""
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True

    def on(a, b, c, o):
        return o == 0 and min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return on(p1, p2, q1, o1) or on(p1, p2, q2, o2) or on(q1, q2, p1, o3) or on(q1, q2, p2, o4)


def polygon_is_simple(polygon):
    """True when no two non-adjacent edges of the closed polygon touch."""
    v = np.asarray(polygon, dtype=float)
    n = len(v)
    if n < 3:
        return False
    a = v
    b = np.roll(v, -1, axis=0)
    if np.any(np.all(a == b, axis=1)):
        return False
    # bounding-box prefilter, exact test on survivors
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    overlap = (
        (lo[:, None, 0] <= hi[None, :, 0])
        & (lo[None, :, 0] <= hi[:, None, 0])
        & (lo[:, None, 1] <= hi[None, :, 1])
        & (lo[None, :, 1] <= hi[:, None, 1])
    )
    ii, jj = np.nonzero(np.triu(overlap, k=2))
    for i, j in zip(ii, jj):
        if i == 0 and j == n - 1:
            continue
        if segments_intersect(a[i], b[i], a[j], b[j]):
            return False
    return True
