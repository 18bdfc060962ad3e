"""Deterministic synthetic scenes: lane networks plus agent tracks.

Layouts: straight, curve, fork, merge, grid, lane_change. ``"mixed"`` cycles
through all six. Every scene gets a random rigid transform so that absolute
position and orientation carry no information.

On-path agents follow a random route through the lane graph at constant speed
with AR(1) Gaussian lateral noise. Path-free agents drive a straight line in an
unlaned lot (its own drivable polygon) at least 12 m away from every lane.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .frenet import frenet_to_cartesian_array
from .lane_graph import AgentTrack, LaneGraph, LaneSegment, Scene, nearest_segment_distances, save_scene
from .paths import ReferencePath
from .sampler import SamplerConfig, build_candidates

LAYOUTS = ("straight", "curve", "fork", "merge", "grid", "lane_change")
LANE_WIDTH = 3.5
CHORD = 4.0
ARC_CHORD = 2.0
HISTORY_STEPS = 20
FUTURE_STEPS = 30
DT = 0.1
NOISE_RHO = 0.9


@dataclass
class GenConfig:
    seed: int = 0
    layout: object = "mixed"
    n_scenes: int = 100
    speed_range: tuple = (4.0, 14.0)
    lateral_noise_sigma: float = 0.15
    path_free_fraction: float = 0.0

    def __post_init__(self):
        self.speed_range = tuple(float(v) for v in self.speed_range)
        if len(self.speed_range) != 2 or self.speed_range[0] > self.speed_range[1] or self.speed_range[0] <= 0:
            raise ConfigError("speed_range must be (min, max) with 0 < min <= max")
        if not 0.0 <= self.path_free_fraction <= 1.0:
            raise ConfigError("path_free_fraction must lie in [0, 1]")
        if self.lateral_noise_sigma < 0:
            raise ConfigError("lateral_noise_sigma must be >= 0")
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")
        for name in self.layouts:
            if name not in LAYOUTS:
                raise ConfigError(f"unknown layout '{name}' (expected one of {', '.join(LAYOUTS)} or 'mixed')")

    @property
    def layouts(self) -> tuple:
        if isinstance(self.layout, str):
            return LAYOUTS if self.layout == "mixed" else (self.layout,)
        return tuple(self.layout)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


# ---------------------------------------------------------------- geometry builders

def _straight(p0, heading, length, chord=CHORD):
    n = max(1, int(round(length / chord)))
    u = np.array([math.cos(heading), math.sin(heading)])
    return np.asarray(p0, dtype=float) + np.linspace(0.0, length, n + 1)[:, None] * u


def _arc(p0, heading, radius, angle, chord=ARC_CHORD):
    """Circular arc starting at ``p0`` tangent to ``heading``; ``angle`` > 0 turns left."""
    n = max(2, int(math.ceil(radius * abs(angle) / chord)))
    sign = 1.0 if angle > 0 else -1.0
    center = np.asarray(p0, dtype=float) + sign * radius * np.array([-math.sin(heading), math.cos(heading)])
    phi0 = heading - sign * math.pi / 2
    phis = phi0 + np.linspace(0.0, angle, n + 1)
    return center + radius * np.stack([np.cos(phis), np.sin(phis)], axis=1)


def _chain(*parts):
    out = [parts[0]]
    for p in parts[1:]:
        out.append(p[1:])
    return np.concatenate(out)


def _end_heading(pts):
    v = pts[-1] - pts[-2]
    return math.atan2(v[1], v[0])


def _offset(pts, off):
    """Offset a polyline laterally (left positive) with miter joins."""
    d = np.diff(pts, axis=0)
    d /= np.hypot(d[:, 0], d[:, 1])[:, None]
    nrm = np.stack([-d[:, 1], d[:, 0]], axis=1)
    vn = np.empty_like(pts)
    vn[0], vn[-1] = nrm[0], nrm[-1]
    if len(pts) > 2:
        m = nrm[:-1] + nrm[1:]
        m /= np.hypot(m[:, 0], m[:, 1])[:, None]
        scale = 1.0 / np.einsum("ij,ij->i", m, nrm[1:])
        vn[1:-1] = m * scale[:, None]
    return pts + off * vn


class _MapBuilder:
    def __init__(self):
        self.segments = []
        self.successors = {}
        self.polygons = []
        self.lanes = []

    def add_lane(self, pts):
        pts = np.asarray(pts, dtype=float)
        ids = []
        for a, b in zip(pts[:-1], pts[1:]):
            sid = len(self.segments)
            self.segments.append(LaneSegment(sid, a, b))
            if ids:
                self.successors.setdefault(ids[-1], []).append(sid)
            ids.append(sid)
        left = _offset(pts, LANE_WIDTH / 2)
        right = _offset(pts, -LANE_WIDTH / 2)
        self.polygons.append(np.concatenate([right, left[::-1]]))
        self.lanes.append(ids)
        return ids

    def link(self, a, b):
        self.successors.setdefault(a, []).append(b)

    def build(self, extra_polygons=()):
        return LaneGraph(self.segments, self.successors, list(self.polygons) + list(extra_polygons))


def _layout_straight(rng, n_lanes=3, length=200.0):
    mb = _MapBuilder()
    for k in range(n_lanes):
        mb.add_lane(_straight((0.0, k * LANE_WIDTH), 0.0, length))
    return mb, [lane[0] for lane in mb.lanes]


def _layout_curve(rng):
    mb = _MapBuilder()
    radius = rng.uniform(25.0, 60.0)
    angle = rng.uniform(np.pi / 3, np.pi / 2) * rng.choice([-1.0, 1.0])
    for k in range(2):
        off = k * LANE_WIDTH
        a = _straight((0.0, off), 0.0, 60.0)
        # inner/outer lanes share the arc center
        r = radius - off if angle > 0 else radius + off
        b = _arc(a[-1], 0.0, r, angle)
        c = _straight(b[-1], _end_heading(b), 60.0)
        mb.add_lane(_chain(a, b, c))
    return mb, [lane[0] for lane in mb.lanes]


def _layout_fork(rng):
    mb = _MapBuilder()
    side = rng.choice([-1.0, 1.0])
    stem = mb.add_lane(_straight((0.0, 0.0), 0.0, 80.0))
    mb.add_lane(_straight((0.0, -side * LANE_WIDTH), 0.0, 200.0))
    through = mb.add_lane(_straight((80.0, 0.0), 0.0, 120.0))
    radius = rng.uniform(30.0, 50.0)
    arc = _arc((80.0, 0.0), 0.0, radius, side * rng.uniform(np.pi / 4, np.pi / 2))
    branch = mb.add_lane(_chain(arc, _straight(arc[-1], _end_heading(arc), 60.0)[0:])[0:])
    mb.link(stem[-1], through[0])
    mb.link(stem[-1], branch[0])
    return mb, [stem[0], mb.lanes[1][0]]


def _layout_merge(rng):
    mb = _MapBuilder()
    side = rng.choice([-1.0, 1.0])
    main = mb.add_lane(_straight((0.0, 0.0), 0.0, 200.0))
    mb.add_lane(_straight((0.0, side * LANE_WIDTH), 0.0, 200.0))
    # ramp: arc ending tangent to the main lane at x = 100
    radius = rng.uniform(40.0, 70.0)
    angle = rng.uniform(np.pi / 6, np.pi / 3)
    # build the arc backwards from the merge point, then reverse it
    back = _arc((100.0, 0.0), np.pi, radius, side * angle)
    lead = _straight(back[-1], _end_heading(back), 50.0)
    ramp_pts = _chain(back, lead)[::-1]
    ramp = mb.add_lane(ramp_pts)
    merge_seg = next(s for s in main if np.allclose(mb.segments[s].start, (100.0, 0.0)))
    mb.link(ramp[-1], merge_seg)
    return mb, [main[0], mb.lanes[1][0], ramp[0]]


def _layout_grid(rng, n=3, block=50.0, half=7.0, stub=45.0):
    mb = _MapBuilder()
    nodes = [(i, j) for i in range(n) for j in range(n)]
    dirs = [np.array(v, dtype=float) for v in ((1, 0), (-1, 0), (0, 1), (0, -1))]

    def right(u):
        return np.array([u[1], -u[0]])

    incoming = {}  # (node, dir index) -> last segment of lane arriving along dir
    outgoing = {}  # (node, dir index) -> first segment of lane leaving along dir
    entries = []
    for (i, j) in nodes:
        c = np.array([i * block, j * block])
        for k, u in enumerate(dirs):
            nxt = (i + int(u[0]), j + int(u[1]))
            start = c + half * u + LANE_WIDTH / 2 * right(u)
            if nxt in nodes:
                length = block - 2 * half
            else:
                length = stub
            lane = mb.add_lane(_straight(start, math.atan2(u[1], u[0]), length))
            outgoing[((i, j), k)] = lane[0]
            if nxt in nodes:
                incoming[(nxt, k)] = lane[-1]
            prev = (i - int(u[0]), j - int(u[1]))
            if prev not in nodes:
                # entry stub arriving at this node from outside
                s0 = c - (half + stub) * u + LANE_WIDTH / 2 * right(u)
                entry = mb.add_lane(_straight(s0, math.atan2(u[1], u[0]), stub))
                incoming[((i, j), k)] = entry[-1]
                entries.append(entry[0])
    for (node, k), last in incoming.items():
        u = dirs[k]
        end = mb.segments[last].end
        h = math.atan2(u[1], u[0])
        for k2, v in enumerate(dirs):
            if (node, k2) not in outgoing or np.allclose(v, -u):
                continue
            if np.allclose(v, u):
                pts = _straight(end, h, 2 * half, chord=3.5)
            elif np.allclose(v, right(u)):
                pts = _arc(end, h, half - LANE_WIDTH / 2, -np.pi / 2)
            else:
                pts = _arc(end, h, half + LANE_WIDTH / 2, np.pi / 2)
            conn = mb.add_lane(pts)
            mb.link(last, conn[0])
            mb.link(conn[-1], outgoing[(node, k2)])
    return mb, entries


_BUILDERS = {
    "straight": _layout_straight,
    "curve": _layout_curve,
    "fork": _layout_fork,
    "merge": _layout_merge,
    "grid": _layout_grid,
    "lane_change": _layout_straight,
}


# ---------------------------------------------------------------- agents

def _lateral_noise(rng, n, sigma):
    if sigma == 0:
        return np.zeros(n)
    eps = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = sigma * eps[0]
    k = math.sqrt(1 - NOISE_RHO ** 2)
    for i in range(1, n):
        out[i] = NOISE_RHO * out[i - 1] + k * sigma * eps[i]
    return out


def _random_route(rng, graph, start, min_length):
    ids = [start]
    length = graph.segment(start).length
    while length < min_length:
        succ = [s for s in graph.successors(ids[-1]) if s not in ids]
        if not succ:
            return None
        nxt = int(succ[rng.integers(len(succ))])
        ids.append(nxt)
        length += graph.segment(nxt).length
    return ids


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _on_path_track(rng, graph, entries, cfg, layout):
    v = rng.uniform(*cfg.speed_range)
    hist_len = v * (HISTORY_STEPS - 1) * DT
    fut_len = v * FUTURE_STEPS * DT
    for _ in range(100):
        start = int(entries[rng.integers(len(entries))])
        route = _random_route(rng, graph, start, hist_len + fut_len + 150.0)
        if route is None:
            route = _random_route(rng, graph, start, hist_len + fut_len + 2.0)
        if route is None:
            continue
        path = ReferencePath.from_segments(graph, route)
        lo, hi = hist_len + 1.0, path.length - fut_len - 1.0
        if hi <= lo:
            continue
        s0 = rng.uniform(lo, min(hi, lo + 120.0))
        t = np.arange(-(HISTORY_STEPS - 1), FUTURE_STEPS + 1) * DT
        s = s0 + v * t
        d = _lateral_noise(rng, len(t), cfg.lateral_noise_sigma)
        if layout == "lane_change":
            y0 = graph.segment(route[0]).start
            lane_idx = int(round(y0[1] / LANE_WIDTH))
            choices = [dv for dv in (-1, 1) if 0 <= lane_idx + dv <= 2]
            shift = LANE_WIDTH * choices[rng.integers(len(choices))]
            duration = rng.uniform(2.5, 4.0)
            progress = rng.uniform(0.25, 0.5)
            t_start = -progress * duration
            d = d + shift * _smoothstep((t - t_start) / duration)
        pts = frenet_to_cartesian_array(path, s, d)
        return pts[:HISTORY_STEPS], pts[HISTORY_STEPS:]
    raise RuntimeError("could not place an on-path agent")


def _path_free_track(rng, graph, cfg):
    v = rng.uniform(*cfg.speed_range)
    lo = np.minimum(graph.starts.min(axis=0), graph.ends.min(axis=0)) - 40.0
    hi = np.maximum(graph.starts.max(axis=0), graph.ends.max(axis=0)) + 40.0
    t = np.arange(-(HISTORY_STEPS - 1), FUTURE_STEPS + 1) * DT
    for _ in range(500):
        p0 = rng.uniform(lo, hi)
        h = rng.uniform(-np.pi, np.pi)
        u = np.array([math.cos(h), math.sin(h)])
        pts = p0 + (v * t)[:, None] * u
        dist = nearest_segment_distances(graph, pts)
        if dist[HISTORY_STEPS - 1] < 12.0 or dist.min() < 8.0:
            continue
        margin = 4.0
        n = np.array([-u[1], u[0]])
        a, b = pts[0] - margin * u, pts[-1] + margin * u
        lot = np.array([a - margin * n, b - margin * n, b + margin * n, a + margin * n])
        return pts[:HISTORY_STEPS], pts[HISTORY_STEPS:], lot
    raise RuntimeError("could not place a path-free agent")


def _random_rigid(rng):
    theta = rng.uniform(-np.pi, np.pi)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]]), rng.uniform(-200.0, 200.0, size=2)


def _make_scene(cfg, index, layout, path_free):
    rng = np.random.default_rng([cfg.seed, index])
    sampler = SamplerConfig()
    for _ in range(50):
        mb, entries = _BUILDERS[layout](rng)
        graph = mb.build()
        lots = []
        if path_free:
            hist, fut, lot = _path_free_track(rng, graph, cfg)
            lots.append(lot)
        else:
            hist, fut = _on_path_track(rng, graph, entries, cfg, layout)
        rot, off = _random_rigid(rng)
        graph = mb.build(lots).transformed(rot, off)
        track = AgentTrack(0, hist @ rot.T + off, fut @ rot.T + off)
        cands = build_candidates(graph, track, DT, FUTURE_STEPS, sampler)
        if cands.is_path_free == path_free:
            return Scene(graph, [track], 0, DT)
    raise RuntimeError(f"scene {index}: could not satisfy the path-free label")


def generate(config: GenConfig) -> list:
    """Generate ``config.n_scenes`` scenes; deterministic under ``config.seed``."""
    layouts = config.layouts
    n_free = int(round(config.path_free_fraction * config.n_scenes))
    order = np.random.default_rng([config.seed, 7919]).permutation(config.n_scenes)
    free = set(order[:n_free].tolist())
    return [_make_scene(config, i, layouts[i % len(layouts)], i in free) for i in range(config.n_scenes)]


def split(scenes: Sequence, train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle then split into disjoint ``(train, validation)`` lists."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(scenes))
    n_train = int(round(train_fraction * len(scenes)))
    return [scenes[i] for i in order[:n_train]], [scenes[i] for i in order[n_train:]]


def write_scenes(scenes, directory) -> list:
    os.makedirs(directory, exist_ok=True)
    width = max(4, len(str(len(scenes) - 1)))
    paths = []
    for i, scene in enumerate(scenes):
        p = os.path.join(directory, f"scene_{i:0{width}d}.json")
        save_scene(scene, p)
        paths.append(p)
    return paths
