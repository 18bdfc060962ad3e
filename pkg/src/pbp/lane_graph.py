"""Vectorized HD map: discretized lane segments, connectivity and drivable area.

Scenes are stored as one self-contained JSON document::

    {"map": {"segments": [{"id": 0, "start": [x, y], "end": [x, y]}, ...],
             "successors": {"0": [1, 2], ...},
             "drivable_area": [[[x, y], ...], ...]},
     "agents": [{"id": 0, "history": [[x, y], ...], "future": [[x, y], ...] | null}],
     "focal_agent_id": 0,
     "dt": 0.1}
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyMapError, ParseError, ValidationError
from .geometry import points_in_polygon, polygon_is_simple, project_on_segments

SUCCESSOR_GAP_TOL = 0.5
DEFAULT_DT = 0.1


@dataclass(frozen=True)
class LaneSegment:
    id: int
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float).reshape(2))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float).reshape(2))
        if not (np.all(np.isfinite(self.start)) and np.all(np.isfinite(self.end))):
            raise ValidationError(f"segment {self.id}: non-finite coordinates")
        if self.length <= 0.0:
            raise ValidationError(f"segment {self.id}: zero length")

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))

    @property
    def direction(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    @property
    def heading(self) -> float:
        d = self.end - self.start
        return float(np.arctan2(d[1], d[0]))


class LaneGraph:
    """Immutable lane graph. All queries are read-only."""

    def __init__(self, segments: Sequence[LaneSegment], successors: Mapping[int, Sequence[int]] = None,
                 drivable_area: Sequence = ()):
        segs = sorted(segments, key=lambda s: s.id)
        ids = [s.id for s in segs]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError(f"segment {dup}: duplicate id")
        self._segments = {s.id: s for s in segs}
        self.ids = np.array(ids, dtype=np.int64)
        self.starts = np.array([s.start for s in segs], dtype=float).reshape(-1, 2)
        self.ends = np.array([s.end for s in segs], dtype=float).reshape(-1, 2)
        self.lengths = np.hypot(*(self.ends - self.starts).T) if segs else np.zeros(0)
        self.directions = (self.ends - self.starts) / self.lengths[:, None] if segs else np.zeros((0, 2))
        self.headings = np.arctan2(self.directions[:, 1], self.directions[:, 0])
        self._index = {sid: i for i, sid in enumerate(ids)}

        succ = {}
        for key, vals in (successors or {}).items():
            sid = int(key)
            if sid not in self._segments:
                raise ValidationError(f"segment {sid}: successor entry for unknown segment")
            out = []
            for v in vals:
                v = int(v)
                if v not in self._segments:
                    raise ValidationError(f"segment {sid}: dangling successor id {v}")
                gap = float(np.hypot(*(self._segments[v].start - self._segments[sid].end)))
                if gap > SUCCESSOR_GAP_TOL:
                    raise ValidationError(
                        f"segment {sid}: successor {v} starts {gap:.3f} m from its end (> {SUCCESSOR_GAP_TOL} m)"
                    )
                if v not in out:
                    out.append(v)
            if out:
                succ[sid] = tuple(sorted(out))
        self._successors = succ

        polys = []
        for k, poly in enumerate(drivable_area):
            arr = np.asarray(poly, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
                raise ValidationError(f"drivable_area[{k}]: polygon needs >= 3 two-dimensional vertices")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"drivable_area[{k}]: non-finite vertex")
            if not polygon_is_simple(arr):
                raise ValidationError(f"drivable_area[{k}]: polygon is not simple")
            polys.append(arr)
        self.drivable_area = tuple(polys)
        self._poly_boxes = np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()] for p in polys]
                                    ).reshape(-1, 4)

    def __len__(self):
        return len(self._segments)

    def __contains__(self, sid):
        return sid in self._segments

    @property
    def segments(self):
        return list(self._segments.values())

    def segment(self, sid: int) -> LaneSegment:
        return self._segments[sid]

    def index_of(self, sid: int) -> int:
        return self._index[sid]

    def successors(self, sid: int) -> tuple:
        return self._successors.get(sid, ())

    @property
    def successor_map(self):
        return dict(self._successors)

    @cached_property
    def predecessor_map(self):
        pred = {}
        for k, vals in self._successors.items():
            for v in vals:
                pred.setdefault(v, []).append(k)
        return {k: tuple(sorted(v)) for k, v in pred.items()}

    def transformed(self, rot: np.ndarray, offset) -> "LaneGraph":
        """Copy with every coordinate mapped through ``p @ rot.T + offset``."""
        offset = np.asarray(offset, dtype=float)
        segs = [LaneSegment(s.id, rot @ s.start + offset, rot @ s.end + offset) for s in self.segments]
        polys = [p @ rot.T + offset for p in self.drivable_area]
        return LaneGraph(segs, self._successors, polys)

    def to_dict(self) -> dict:
        return {
            "segments": [{"id": int(s.id), "start": _pt(s.start), "end": _pt(s.end)} for s in self.segments],
            "successors": {str(k): [int(v) for v in vals] for k, vals in sorted(self._successors.items())},
            "drivable_area": [[_pt(v) for v in poly] for poly in self.drivable_area],
        }


def _pt(p):
    return [float(p[0]), float(p[1])]


@dataclass
class AgentTrack:
    id: int
    history: np.ndarray
    future: Optional[np.ndarray] = None

    def __post_init__(self):
        self.history = np.asarray(self.history, dtype=float).reshape(-1, 2)
        if self.future is not None:
            self.future = np.asarray(self.future, dtype=float).reshape(-1, 2)

    @property
    def position(self) -> np.ndarray:
        return self.history[-1]

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "history": [_pt(p) for p in self.history],
            "future": None if self.future is None else [_pt(p) for p in self.future],
        }


@dataclass
class Scene:
    map: LaneGraph
    agents: list = field(default_factory=list)
    focal_agent_id: int = 0
    dt: float = DEFAULT_DT

    def __post_init__(self):
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate agent ids")
        if self.focal_agent_id not in ids:
            raise ValidationError(f"focal agent {self.focal_agent_id} not present in agents")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")

    def agent(self, agent_id: int) -> AgentTrack:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    @property
    def focal_agent(self) -> AgentTrack:
        return self.agent(self.focal_agent_id)

    def to_dict(self) -> dict:
        return {
            "map": self.map.to_dict(),
            "agents": [a.to_dict() for a in self.agents],
            "focal_agent_id": int(self.focal_agent_id),
            "dt": float(self.dt),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ValidationError(f"{where}: missing field '{key}'")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ValidationError(f"{where}: field '{key}' has wrong type")
    return val


def _points(val, where):
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a list of [x, y] points") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"{where}: expected a list of [x, y] points")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: non-finite coordinate")
    return arr


def scene_from_dict(doc: dict) -> Scene:
    m = _require(doc, "map", dict, "scene")
    segs = []
    for k, s in enumerate(_require(m, "segments", list, "map")):
        sid = _require(s, "id", int, f"segments[{k}]")
        start = _points([_require(s, "start", list, f"segment {sid}")], f"segment {sid} start")[0]
        end = _points([_require(s, "end", list, f"segment {sid}")], f"segment {sid} end")[0]
        segs.append(LaneSegment(sid, start, end))
    succ_raw = m.get("successors", {}) or {}
    if not isinstance(succ_raw, dict):
        raise ValidationError("map: 'successors' must be an object")
    successors = {}
    for key, vals in succ_raw.items():
        try:
            sid = int(key)
        except ValueError:
            raise ValidationError(f"successors: key '{key}' is not a segment id") from None
        if not isinstance(vals, list) or not all(isinstance(v, int) for v in vals):
            raise ValidationError(f"segment {sid}: successors must be a list of ints")
        successors[sid] = vals
    polys = [_points(p, f"drivable_area[{k}]") for k, p in enumerate(m.get("drivable_area", []) or [])]
    graph = LaneGraph(segs, successors, polys)

    agents = []
    for k, a in enumerate(_require(doc, "agents", list, "scene")):
        aid = _require(a, "id", int, f"agents[{k}]")
        hist = _points(_require(a, "history", list, f"agent {aid}"), f"agent {aid} history")
        fut = a.get("future")
        fut = None if fut is None else _points(fut, f"agent {aid} future")
        agents.append(AgentTrack(aid, hist, fut))
    focal = _require(doc, "focal_agent_id", int, "scene")
    dt = doc.get("dt", DEFAULT_DT)
    if not isinstance(dt, (int, float)) or isinstance(dt, bool):
        raise ValidationError("scene: 'dt' must be a number")
    return Scene(graph, agents, focal, float(dt))


def load_scene(source) -> Scene:
    """Parse and validate a scenario from bytes, text, a path or a binary stream."""
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, str):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif hasattr(source, "read"):
        raw = source.read()
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("scenario is not valid UTF-8", offset=exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed scenario JSON: {exc.msg}", offset=len(text[: exc.pos].encode("utf-8"))) from None
    return scene_from_dict(doc)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene.dumps())


def scene_from_json(text: str) -> Scene:
    return load_scene(io.BytesIO(text.encode("utf-8")))


def nearest_segment(graph: LaneGraph, point) -> tuple:
    """Return ``(segment id, distance)`` of the closest segment; ties go to the lowest id."""
    if len(graph) == 0:
        raise EmptyMapError("lane graph has no segments")
    dist = project_on_segments(np.asarray(point, dtype=float)[None], graph.starts, graph.ends)[0][0]
    best = dist.min()
    # ids are sorted, so the first index within tolerance is the lowest id
    k = int(np.flatnonzero(dist <= best + 1e-12)[0])
    return int(graph.ids[k]), float(dist[k])


def nearest_segment_distances(graph: LaneGraph, points) -> np.ndarray:
    """Distance from each point to its nearest segment (batched, chunked)."""
    if len(graph) == 0:
        raise EmptyMapError("lane graph has no segments")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty(len(pts))
    chunk = max(1, 200000 // max(1, len(graph)))
    for i in range(0, len(pts), chunk):
        out[i:i + chunk] = project_on_segments(pts[i:i + chunk], graph.starts, graph.ends)[0].min(axis=1)
    return out


def contains_points(graph: LaneGraph, points) -> np.ndarray:
    """Vectorized drivable-area membership (boundary counts as inside)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    inside = np.zeros(len(pts), dtype=bool)
    for poly, (x0, y0, x1, y1) in zip(graph.drivable_area, graph._poly_boxes):
        cand = ~inside & (pts[:, 0] >= x0 - 1e-9) & (pts[:, 0] <= x1 + 1e-9) & (pts[:, 1] >= y0 - 1e-9) & (
            pts[:, 1] <= y1 + 1e-9)
        if cand.any():
            idx = np.flatnonzero(cand)
            inside[idx] = points_in_polygon(pts[idx], poly)
    return inside


def contains_point(graph: LaneGraph, point) -> bool:
    return bool(contains_points(graph, np.asarray(point, dtype=float)[None])[0])
