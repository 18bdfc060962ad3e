"""Candidate reference paths: seed-lane selection, BFS over the lane graph and
ground-truth path labelling."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import project_on_segments, wrap_angle
from .paths import ReferencePath

GT_TIE_EPS = 1e-9


@dataclass
class SamplerConfig:
    seed_radius_m: float = 10.0
    seed_max_angle_deg: float = 60.0
    path_min_len_m: float = 5.0
    path_max_len_m: Optional[float] = None
    max_paths: int = 1024
    path_free_threshold_m: float = 5.0

    def __post_init__(self):
        if not self.seed_radius_m > 0:
            raise ConfigError("seed_radius_m must be positive")
        if not 0 < self.seed_max_angle_deg <= 180:
            raise ConfigError("seed_max_angle_deg must lie in (0, 180]")
        if self.path_max_len_m is not None and self.path_max_len_m < self.path_min_len_m:
            raise ConfigError("path_max_len_m must be >= path_min_len_m")
        if self.max_paths < 1:
            raise ConfigError("max_paths must be >= 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def max_length_for(self, speed: float, horizon_s: float) -> float:
        """Speed-scaled BFS bound used when no explicit ``path_max_len_m`` is set."""
        if self.path_max_len_m is not None:
            return float(self.path_max_len_m)
        return max(self.path_min_len_m, 1.5 * (speed * horizon_s + 10.0))


@dataclass
class CandidateSet:
    agent_id: int
    paths: list = field(default_factory=list)
    gt_index: Optional[int] = None
    is_path_free: bool = False

    def __post_init__(self):
        if self.gt_index is not None:
            if self.is_path_free:
                raise ValueError("a path-free agent cannot have a ground-truth path")
            if not 0 <= self.gt_index < len(self.paths):
                raise IndexError(f"gt_index {self.gt_index} out of range")

    def __len__(self):
        return len(self.paths)

    @property
    def endpoints(self) -> np.ndarray:
        return np.array([p.end_point for p in self.paths]).reshape(-1, 2)


def select_seed_segments(graph, position, heading, radius=10.0, max_angle=np.pi / 3):
    """Segments within ``radius`` of ``position`` whose direction is within
    ``max_angle`` of ``heading``, nearest first (ties by id)."""
    if len(graph) == 0:
        return []
    dist = project_on_segments(np.asarray(position, dtype=float)[None], graph.starts, graph.ends)[0][0]
    dang = np.abs(wrap_angle(graph.headings - heading))
    ok = (dist <= radius) & (dang <= max_angle)
    idx = np.flatnonzero(ok)
    order = np.lexsort((graph.ids[idx], dist[idx]))
    return [int(graph.ids[i]) for i in idx[order]]


def sample_candidate_paths(graph, seeds, min_length, max_length, max_paths=1024):
    """Breadth-first enumeration of variable-length paths from each seed.

    A path is emitted once its length reaches ``min_length`` and at every deeper
    level, when it dead-ends, or when any extension would exceed ``max_length``.
    Output is deduplicated by segment sequence and ordered shortest first.
    """
    if min_length > max_length:
        raise ConfigError("min_length must be <= max_length")
    if max_paths < 1:
        raise ConfigError("max_paths must be >= 1")
    lengths = dict(zip(graph.ids.tolist(), graph.lengths.tolist()))
    emitted = {}

    def emit(ids, length):
        if ids not in emitted:
            emitted[ids] = (length, len(emitted))

    for seed in seeds:
        queue = deque([((seed,), lengths[seed])])
        while queue:
            ids, length = queue.popleft()
            if length > max_length:
                # oversized seed on its own: nothing shorter exists from here
                emit(ids, length)
                continue
            if length >= min_length:
                emit(ids, length)
            succ = [s for s in graph.successors(ids[-1]) if s not in ids]
            if not succ:
                emit(ids, length)
                continue
            for s in succ:
                new_len = length + lengths[s]
                if new_len > max_length:
                    emit(ids, length)
                else:
                    queue.append((ids + (s,), new_len))

    ordered = sorted(emitted.items(), key=lambda kv: kv[1])
    return [ReferencePath.from_segments(graph, ids) for ids, _ in ordered[:max_paths]]


def path_distances(paths, points) -> np.ndarray:
    """(n_paths, n_points) point-to-polyline distances."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty((len(paths), len(pts)))
    for i, p in enumerate(paths):
        out[i] = project_on_segments(pts, p.polyline[:-1], p.polyline[1:])[0].min(axis=1)
    return out


def assign_ground_truth(paths, future, path_free_threshold=5.0):
    """Label the ground-truth path of a future trajectory.

    cost = mean waypoint-to-polyline distance + distance between the trajectory
    endpoint and the path endpoint. Returns ``(gt_index | None, is_path_free)``.
    """
    fut = np.asarray(future, dtype=float).reshape(-1, 2)
    if not paths:
        return None, True
    dist = path_distances(paths, fut)
    ends = np.array([p.end_point for p in paths])
    cost = dist.mean(axis=1) + np.hypot(*(ends - fut[-1]).T)
    gt = int(np.flatnonzero(cost <= cost.min() + GT_TIE_EPS)[0])
    if dist[gt].max() > path_free_threshold:
        return None, True
    return gt, False


def agent_heading(history, min_step=0.01) -> float:
    """Heading from the most recent displacement longer than ``min_step``; 0 if stationary."""
    h = np.asarray(history, dtype=float)
    steps = np.diff(h, axis=0)
    norms = np.hypot(steps[:, 0], steps[:, 1]) if len(steps) else np.zeros(0)
    moving = np.flatnonzero(norms > min_step)
    if len(moving) == 0:
        return 0.0
    v = steps[moving[-1]]
    return float(np.arctan2(v[1], v[0]))


def agent_speed(history, dt) -> float:
    h = np.asarray(history, dtype=float)
    if len(h) < 2:
        return 0.0
    return float(np.hypot(*(h[-1] - h[-2])) / dt)


def build_candidates(graph, track, dt, horizon_steps, config: SamplerConfig = None, label=True) -> CandidateSet:
    """Full sampling for one agent: seeds, BFS, and (optionally) GT labelling."""
    config = config or SamplerConfig()
    heading = agent_heading(track.history)
    speed = agent_speed(track.history, dt)
    seeds = select_seed_segments(graph, track.position, heading, config.seed_radius_m,
                                 np.deg2rad(config.seed_max_angle_deg))
    max_len = config.max_length_for(speed, horizon_steps * dt)
    paths = sample_candidate_paths(graph, seeds, min(config.path_min_len_m, max_len), max_len, config.max_paths)
    gt, free = None, False
    if label and track.future is not None:
        gt, free = assign_ground_truth(paths, track.future, config.path_free_threshold_m)
    return CandidateSet(track.id, paths, gt, free)
