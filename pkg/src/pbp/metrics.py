"""Best-of-K displacement metrics and map-compliance metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyMapError, ShapeError, UndefinedMetricError
from .lane_graph import contains_points, nearest_segment_distances


def _trajectories(preds):
    if hasattr(preds, "trajectories"):
        return preds.trajectories, preds.probabilities
    trajs = np.asarray(preds, dtype=float)
    if trajs.ndim == 2:
        trajs = trajs[None]
    return trajs, np.full(len(trajs), 1.0 / len(trajs))


def top_k(preds, k=None) -> np.ndarray:
    """The ``k`` most probable trajectories, ties broken by lower mode index."""
    trajs, probs = _trajectories(preds)
    if k is None or k >= len(trajs):
        return trajs
    if k < 1:
        raise ValueError("K must be >= 1")
    return trajs[np.argsort(-probs, kind="stable")[:k]]


def _errors(preds, gt, k):
    trajs = top_k(preds, k)
    gt = np.asarray(gt, dtype=float)
    if trajs.shape[1:] != gt.shape:
        raise ShapeError(f"prediction shape {trajs.shape[1:]} does not match ground truth {gt.shape}")
    return np.hypot(*(trajs - gt).transpose(2, 0, 1))


def min_ade(preds, gt, k=None) -> float:
    return float(_errors(preds, gt, k).mean(axis=1).min())


def min_fde(preds, gt, k=None) -> float:
    return float(_errors(preds, gt, k)[:, -1].min())


def miss_rate(dataset, k=None, threshold=2.0) -> float:
    """Fraction of ``(preds, gt)`` samples whose best final error exceeds ``threshold``."""
    dataset = list(dataset)
    if not dataset:
        raise UndefinedMetricError("miss rate of an empty dataset is undefined")
    return sum(min_fde(p, g, k) > threshold for p, g in dataset) / len(dataset)


def offroad_mask(preds, graph) -> np.ndarray:
    """(K, T) boolean: waypoint outside the drivable area."""
    trajs, _ = _trajectories(preds)
    k, t, _ = trajs.shape
    return ~contains_points(graph, trajs.reshape(-1, 2)).reshape(k, t)


def offroad_rate(preds, graph):
    """``(overall, per-horizon list)`` over all modes of one prediction set."""
    mask = offroad_mask(preds, graph)
    per_t = mask.mean(axis=0)
    return float(per_t.mean()), per_t.tolist()


def lane_deviation(preds, graph) -> float:
    if len(graph) == 0:
        raise EmptyMapError("lane deviation needs at least one lane segment")
    trajs, _ = _trajectories(preds)
    return float(nearest_segment_distances(graph, trajs.reshape(-1, 2)).mean())


def dac(preds, graph) -> float:
    """Fraction of trajectories with no offroad waypoint."""
    return float((~offroad_mask(preds, graph).any(axis=1)).mean())


@dataclass
class MetricsReport:
    min_ade: dict = field(default_factory=dict)
    min_fde: dict = field(default_factory=dict)
    miss_rate: dict = field(default_factory=dict)
    offroad_rate: float = 0.0
    offroad_by_horizon: list = field(default_factory=list)
    lane_deviation: float = 0.0
    dac: float = 1.0
    n_samples: int = 0

    def to_dict(self):
        d = asdict(self)
        for key in ("min_ade", "min_fde", "miss_rate"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d

    def horizon_csv(self) -> str:
        rows = ["horizon_step,offroad_rate"]
        rows += [f"{t},{r!r}" for t, r in enumerate(self.offroad_by_horizon, start=1)]
        return "\n".join(rows) + "\n"


def check_monotone(report: MetricsReport):
    """Best-of-K metrics must not increase with K."""
    ks = sorted(report.min_ade)
    for name in ("min_ade", "min_fde", "miss_rate"):
        vals = [getattr(report, name)[k] for k in ks]
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise AssertionError(f"{name} increases with K: {dict(zip(ks, vals))}")


def evaluate(records, ks=(1, 6), threshold=2.0) -> MetricsReport:
    """Aggregate over ``(preds, gt, graph)`` records.

    Map metrics pool every waypoint of every mode of every record.
    """
    records = list(records)
    if not records:
        raise UndefinedMetricError("cannot evaluate an empty set of predictions")
    rep = MetricsReport(n_samples=len(records))
    for k in ks:
        ade = [min_ade(p, g, k) for p, g, _ in records]
        fde = [min_fde(p, g, k) for p, g, _ in records]
        rep.min_ade[k] = float(np.mean(ade))
        rep.min_fde[k] = float(np.mean(fde))
        rep.miss_rate[k] = float(np.mean(np.asarray(fde) > threshold))
    masks = [offroad_mask(p, m) for p, _, m in records]
    t = {mask.shape[1] for mask in masks}
    if len(t) != 1:
        raise ShapeError("all predictions must share the same horizon")
    stacked = np.concatenate(masks, axis=0)
    per_t = stacked.mean(axis=0)
    rep.offroad_by_horizon = per_t.tolist()
    rep.offroad_rate = float(per_t.mean())
    rep.dac = float((~stacked.any(axis=1)).mean())
    dev = np.concatenate([nearest_segment_distances(m, _trajectories(p)[0].reshape(-1, 2)) for p, _, m in records])
    rep.lane_deviation = float(dev.mean())
    check_monotone(rep)
    return rep
