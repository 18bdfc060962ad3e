"""Cartesian <-> path-relative Frenet conversion on piecewise-linear reference paths.

``s`` is arc length along the path polyline and ``d`` the signed lateral offset,
positive to the left of the direction of travel. The normal used to place a
point is the left normal of the chord containing ``s`` (the lower chord at an
exact joint), so the inverse map is exact inside every chord.

Single-point projection clamps ``s`` to ``[0, L]``. The inverse map extends the
first and last chords linearly by up to ``EXTRAPOLATION_CAP`` meters so that
regressed longitudinal positions past the path ends stay meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GeometryError, ShapeError
from .paths import ReferencePath

EXTRAPOLATION_CAP = 20.0
TIE_EPS = 1e-9
MONOTONIC_SLACK = 1.0


@dataclass(frozen=True)
class FrenetState:
    s: float
    d: float


@dataclass(frozen=True, eq=False)
class FrenetTrajectory:
    sd: np.ndarray
    path: Optional[ReferencePath] = None

    @property
    def s(self):
        return self.sd[:, 0]

    @property
    def d(self):
        return self.sd[:, 1]

    @property
    def states(self):
        return [FrenetState(float(s), float(d)) for s, d in self.sd]

    def __len__(self):
        return len(self.sd)


def _check(path):
    if path is None or len(path.polyline) < 2 or not path.length > 0:
        raise GeometryError("degenerate path: zero length")


def _project(path, points, extend=(0.0, 0.0), s_min=None):
    """Closest-foot projection of many points.

    ``extend`` lengthens the first/last chord backwards/forwards. ``s_min`` (per
    point) restricts candidate feet to ``s >= s_min``.
    """
    _check(path)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    a = path.chord_starts
    u = path.chord_dirs
    cum = path.cum_arclength[:-1]
    lo = np.zeros(len(a))
    hi = path.chord_lengths.copy()
    lo[0] -= extend[0]
    hi[-1] += extend[1]
    ap = p[:, None, :] - a[None, :, :]
    t = ap[..., 0] * u[None, :, 0] + ap[..., 1] * u[None, :, 1]
    lo_eff = np.broadcast_to(lo, t.shape)
    valid = np.ones(t.shape, dtype=bool)
    if s_min is not None:
        lo_eff = np.maximum(lo_eff, np.asarray(s_min, dtype=float).reshape(-1, 1) - cum[None, :])
        valid = lo_eff <= hi[None, :]
    t = np.minimum(np.maximum(t, lo_eff), hi[None, :])
    fx = a[None, :, 0] + t * u[None, :, 0]
    fy = a[None, :, 1] + t * u[None, :, 1]
    rx = p[:, None, 0] - fx
    ry = p[:, None, 1] - fy
    dist = np.where(valid, np.hypot(rx, ry), np.inf)
    s = cum[None, :] + t
    best = dist.min(axis=1, keepdims=True)
    k = np.argmin(np.where(dist <= best + TIE_EPS, s, np.inf), axis=1)
    rows = np.arange(len(p))
    d = u[k, 0] * ry[rows, k] - u[k, 1] * rx[rows, k]
    return s[rows, k], d, dist[rows, k]


def project_to_frenet(path: ReferencePath, point, extrapolate: float = 0.0) -> FrenetState:
    """Project one point. ``extrapolate`` > 0 lets ``s`` run past the ends by that many meters."""
    s, d, _ = _project(path, point, (extrapolate, extrapolate))
    return FrenetState(float(s[0]), float(d[0]))


def project_points(path: ReferencePath, points, extrapolate: float = 0.0):
    """Independent (unconstrained) projection of many points; returns ``(s, d)`` arrays."""
    s, d, _ = _project(path, points, (extrapolate, extrapolate))
    return s, d


def trajectory_to_frenet(path: ReferencePath, trajectory, extrapolate: float = 0.0,
                         slack: float = MONOTONIC_SLACK) -> FrenetTrajectory:
    """Project a time-ordered trajectory with a monotonic-``s`` prior.

    Each point after the first only considers feet with ``s >= s_prev - slack``,
    which keeps the projection from jumping backwards where the path folds
    close to itself.
    """
    pts = np.asarray(trajectory, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ShapeError("empty trajectory")
    _check(path)
    out = np.empty((len(pts), 2))
    s_prev = None
    for i, p in enumerate(pts):
        s, d, _ = _project(path, p, (extrapolate, extrapolate), None if s_prev is None else [s_prev - slack])
        out[i] = s[0], d[0]
        s_prev = s[0]
    return FrenetTrajectory(out, path)


def frenet_to_cartesian_array(path: ReferencePath, s, d, cap: float = EXTRAPOLATION_CAP):
    """Vectorized inverse map ``P = xi(s) + d * n(s)``."""
    _check(path)
    s = np.asarray(s, dtype=float)
    d = np.asarray(d, dtype=float)
    L = path.length
    s = np.clip(s, -cap, L + cap)
    cum = path.cum_arclength
    k = np.clip(np.searchsorted(cum, s, side="left") - 1, 0, len(cum) - 2)
    u = path.chord_dirs[k]
    n = path.chord_normals[k]
    base = path.chord_starts[k] + (s - cum[k])[..., None] * u
    return base + d[..., None] * n


def frenet_to_cartesian(path: ReferencePath, state, cap: float = EXTRAPOLATION_CAP):
    if isinstance(state, FrenetState):
        s, d = state.s, state.d
    else:
        s, d = state
    return frenet_to_cartesian_array(path, s, d, cap)


def trajectory_to_cartesian(traj: FrenetTrajectory, path: Optional[ReferencePath] = None):
    path = path if path is not None else traj.path
    return frenet_to_cartesian_array(path, traj.s, traj.d)
