"""Hand-crafted agent encoding and raw path / agent-path / goal features.

The agent vector stands in for a learned scene encoder. Its layout for
dimension ``D`` (default 48) is::

    [0, 2n)       history displacements, agent frame, oldest first, zero-padded
    2n            current speed (m/s)
    2n+1, 2n+2    sin / cos of the current heading
    2n+3 .. 2n+6  map context: nearest-lane distance (capped), cos / sin of the
                  nearest-lane direction relative to the heading, on-road flag
    rest          zeros

with ``n = (D - 7) // 2`` displacement slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistoryError
from .frenet import trajectory_to_frenet
from .geometry import project_on_segments, to_local, wrap_angle
from .lane_graph import contains_point, nearest_segment
from .sampler import agent_heading

AGENT_DIM = 48
PATH_RAW_DIM = 18
AGENT_PATH_RAW_DIM = 12
GOAL_RAW_DIM = 3
COORD_SCALE = 0.1
NEAREST_LANE_CAP = 20.0
HISTORY_EXTENSION = 50.0


@dataclass(frozen=True, eq=False)
class AgentFeature:
    vector: np.ndarray
    origin: np.ndarray
    heading: float
    speed: float

    def __len__(self):
        return len(self.vector)


def encode_agent(track, dt=0.1, graph=None, dim=AGENT_DIM) -> AgentFeature:
    hist = np.asarray(track.history, dtype=float)
    if len(hist) < 2:
        raise InsufficientHistoryError(f"agent {track.id}: need at least 2 history points, got {len(hist)}")
    n_slots = (dim - 7) // 2
    if n_slots < 1:
        raise ValueError("agent feature dimension too small")
    origin = hist[-1].copy()
    heading = agent_heading(hist)
    steps = np.diff(hist, axis=0)
    c, s = np.cos(heading), np.sin(heading)
    local = np.stack([c * steps[:, 0] + s * steps[:, 1], -s * steps[:, 0] + c * steps[:, 1]], axis=1)
    local = local[-n_slots:]
    vec = np.zeros(dim)
    vec[2 * (n_slots - len(local)):2 * n_slots] = local.ravel()
    speed = float(np.hypot(*steps[-1]) / dt)
    base = 2 * n_slots
    vec[base] = speed
    vec[base + 1] = s
    vec[base + 2] = c
    if graph is not None and len(graph):
        sid, dist = nearest_segment(graph, origin)
        rel = wrap_angle(graph.segment(sid).heading - heading)
        vec[base + 3] = min(dist, NEAREST_LANE_CAP)
        vec[base + 4] = np.cos(rel)
        vec[base + 5] = np.sin(rel)
        vec[base + 6] = 1.0 if contains_point(graph, origin) else 0.0
    return AgentFeature(vec, origin, heading, speed)


def _key_segments(paths):
    """Start / middle / end segment geometry for every path: arrays (n, 3, 2)."""
    a = np.empty((len(paths), 3, 2))
    b = np.empty((len(paths), 3, 2))
    for i, p in enumerate(paths):
        r = len(p.segment_starts)
        k = [0, r // 2, r - 1]
        a[i] = p.segment_starts[k]
        b[i] = p.segment_ends[k]
    u = b - a
    u /= np.hypot(u[..., 0], u[..., 1])[..., None]
    return a, b, u


def path_raw_features(paths, agent: AgentFeature) -> np.ndarray:
    """(n, 18): start point, end point and direction of the start/middle/end segments, agent frame."""
    if not paths:
        return np.zeros((0, PATH_RAW_DIM))
    a, b, u = _key_segments(paths)
    la = to_local(a, agent.origin, agent.heading) * COORD_SCALE
    lb = to_local(b, agent.origin, agent.heading) * COORD_SCALE
    lu = to_local(u, np.zeros(2), agent.heading)
    return np.concatenate([la, lb, lu], axis=2).reshape(len(paths), -1)


def agent_path_raw_features(paths, agent: AgentFeature) -> np.ndarray:
    """(n, 12): distance vector to, and heading delta (sin, cos) of, the start/middle/end segments."""
    if not paths:
        return np.zeros((0, AGENT_PATH_RAW_DIM))
    a, b, u = _key_segments(paths)
    n = len(paths)
    _, _, foot = project_on_segments(agent.origin[None], a.reshape(-1, 2), b.reshape(-1, 2))
    vec = to_local(foot[0].reshape(n, 3, 2), agent.origin, agent.heading) * COORD_SCALE
    delta = np.arctan2(u[..., 1], u[..., 0]) - agent.heading
    return np.concatenate([vec, np.sin(delta)[..., None], np.cos(delta)[..., None]], axis=2).reshape(n, -1)


def goal_raw_features(goals, agent: AgentFeature) -> np.ndarray:
    """(n, 3): goal position in the agent frame and its distance."""
    g = to_local(np.asarray(goals, dtype=float).reshape(-1, 2), agent.origin, agent.heading)
    return np.concatenate([g, np.hypot(g[:, 0], g[:, 1])[:, None]], axis=1) * COORD_SCALE


def frenet_history(path, history):
    """Project a history onto ``path``; returns ``(flat input vector, s0, sd array)``."""
    sd = trajectory_to_frenet(path, history, extrapolate=HISTORY_EXTENSION).sd
    s0 = sd[-1, 0]
    rel = np.stack([(sd[:, 0] - s0) * COORD_SCALE, sd[:, 1]], axis=1)
    return rel.ravel(), s0, sd


def frenet_future(path, history, future):
    """Future projected onto ``path`` continuing the history's monotonic prior."""
    traj = np.concatenate([np.asarray(history, dtype=float), np.asarray(future, dtype=float)])
    sd = trajectory_to_frenet(path, traj, extrapolate=HISTORY_EXTENSION).sd
    return sd[len(history):]


def cartesian_history(history, agent: AgentFeature):
    loc = to_local(history, agent.origin, agent.heading)
    return np.stack([loc[:, 0] * COORD_SCALE, loc[:, 1]], axis=1).ravel()
