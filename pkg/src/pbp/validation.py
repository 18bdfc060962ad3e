"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError
from .lane_graph import Scene


def check_trajectory(traj, name="trajectory", length=None) -> np.ndarray:
    """Return ``traj`` as a finite (T, 2) float array."""
    arr = np.asarray(traj, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"{name} must have shape (T, 2), got {arr.shape}")
    if length is not None and len(arr) != length:
        raise ShapeError(f"{name} must have {length} points, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_scenes(scenes, require_future=False) -> list:
    """Accept a single scene or an iterable of scenes; returns a list."""
    if isinstance(scenes, Scene):
        scenes = [scenes]
    scenes = list(scenes)
    if not scenes:
        raise ValidationError("expected at least one scene")
    for i, s in enumerate(scenes):
        if not isinstance(s, Scene):
            raise ValidationError(f"item {i} is {type(s).__name__}, expected Scene")
        if require_future and s.focal_agent.future is None:
            raise ValidationError(f"scene {i}: focal agent {s.focal_agent_id} has no future")
    return scenes


def check_positive(value, name, strict=True) -> float:
    v = float(value)
    if not np.isfinite(v) or (v <= 0 if strict else v < 0):
        raise ValidationError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value!r}")
    return v
