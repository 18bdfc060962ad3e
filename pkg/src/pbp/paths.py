"""Reference paths: chained lane segments with an arc-length table."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GeometryError, ValidationError

_DUP_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class ReferencePath:
    segment_ids: tuple
    polyline: np.ndarray
    cum_arclength: np.ndarray
    segment_starts: np.ndarray = None
    segment_ends: np.ndarray = None

    def __post_init__(self):
        # polyline-only paths treat their chords as segments
        if self.segment_starts is None:
            object.__setattr__(self, "segment_starts", self.polyline[:-1])
            object.__setattr__(self, "segment_ends", self.polyline[1:])

    @classmethod
    def from_polyline(cls, points, segment_ids=(), segment_starts=None, segment_ends=None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise GeometryError("degenerate path: no points")
        keep = [0]
        for i in range(1, len(pts)):
            if np.hypot(*(pts[i] - pts[keep[-1]])) > _DUP_EPS:
                keep.append(i)
        pts = pts[keep]
        if len(pts) < 2:
            raise GeometryError("degenerate path: zero length")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        return cls(tuple(int(s) for s in segment_ids), pts, cum, segment_starts, segment_ends)

    @classmethod
    def from_segments(cls, graph, segment_ids):
        ids = [int(s) for s in segment_ids]
        if not ids:
            raise GeometryError("degenerate path: no segments")
        for a, b in zip(ids, ids[1:]):
            if b not in graph.successors(a):
                raise ValidationError(f"segment {b} is not a successor of segment {a}")
        starts = np.array([graph.segment(sid).start for sid in ids])
        ends = np.array([graph.segment(sid).end for sid in ids])
        pts = np.stack([starts, ends], axis=1).reshape(-1, 2)
        return cls.from_polyline(pts, ids, starts, ends)

    @property
    def length(self) -> float:
        return float(self.cum_arclength[-1])

    @property
    def start_point(self):
        return self.polyline[0]

    @property
    def end_point(self):
        return self.polyline[-1]

    @cached_property
    def chord_starts(self):
        return self.polyline[:-1]

    @cached_property
    def chord_lengths(self):
        return np.diff(self.cum_arclength)

    @cached_property
    def chord_dirs(self):
        return np.diff(self.polyline, axis=0) / self.chord_lengths[:, None]

    @cached_property
    def chord_normals(self):
        u = self.chord_dirs
        return np.stack([-u[:, 1], u[:, 0]], axis=1)

    def reversed(self) -> "ReferencePath":
        return ReferencePath.from_polyline(self.polyline[::-1], self.segment_ids[::-1],
                                           self.segment_ends[::-1], self.segment_starts[::-1])

    def __eq__(self, other):
        if not isinstance(other, ReferencePath):
            return NotImplemented
        return self.segment_ids == other.segment_ids and np.array_equal(self.polyline, other.polyline)

    def __hash__(self):
        return hash((self.segment_ids, self.polyline.tobytes()))

    def __repr__(self):
        return f"ReferencePath(segments={list(self.segment_ids)}, length={self.length:.2f})"
