"""Inference: path classification, NMS, Frenet / Cartesian decoding, the
path-free fallback and the decoder selector."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, EmptyCandidatesError
from .features import (
    agent_path_raw_features,
    cartesian_history,
    encode_agent,
    frenet_history,
    goal_raw_features,
    path_raw_features,
)
from .frenet import FrenetTrajectory, frenet_to_cartesian_array
from .geometry import to_global
from .nn import log_softmax, sigmoid
from .sampler import CandidateSet, SamplerConfig, build_candidates

PROB_TOL = 1e-6


@dataclass
class PredictConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    nms_radius_m: float = 2.0
    selector_threshold: float = 0.5

    def __post_init__(self):
        if self.nms_radius_m < 0:
            raise ConfigError("nms_radius_m must be >= 0")
        if not 0.0 < self.selector_threshold < 1.0:
            raise ConfigError("selector_threshold must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)} - {"sampler"}
        return cls(SamplerConfig.from_dict(d), **{k: v for k, v in d.items() if k in names})


@dataclass
class PredictionSet:
    trajectories: np.ndarray
    probabilities: np.ndarray
    mode_paths: list = None
    agent_id: int = 0
    decoder: str = "path"
    backfilled: list = None

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        k = len(self.probabilities)
        if self.trajectories.ndim != 3 or self.trajectories.shape[0] != k or self.trajectories.shape[2] != 2:
            raise ValueError(f"trajectories must have shape (K, T, 2) with K={k}")
        if self.mode_paths is None:
            self.mode_paths = [None] * k
        if self.backfilled is None:
            self.backfilled = [False] * k
        if np.any(self.probabilities < 0) or abs(self.probabilities.sum() - 1.0) > PROB_TOL:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    def __len__(self):
        return len(self.probabilities)

    @property
    def is_path_free(self) -> bool:
        return all(p is None for p in self.mode_paths)

    def top(self, k: int) -> np.ndarray:
        """Indices of the ``k`` most probable modes (ties by lower index)."""
        return np.argsort(-self.probabilities, kind="stable")[:k]

    def to_dict(self) -> dict:
        return {
            "agent_id": int(self.agent_id),
            "modes": [
                {
                    "probability": float(p),
                    "waypoints": [[float(x), float(y)] for x, y in traj],
                    "path_segment_ids": None if path is None else [int(s) for s in path.segment_ids],
                }
                for traj, p, path in zip(self.trajectories, self.probabilities, self.mode_paths)
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> "PredictionSet":
        modes = doc["modes"]
        return cls(
            np.array([m["waypoints"] for m in modes], dtype=float).reshape(len(modes), -1, 2),
            np.array([m["probability"] for m in modes], dtype=float),
            None,
            int(doc["agent_id"]),
            "path" if any(m.get("path_segment_ids") for m in modes) else "path_free",
        )


class Selection(NamedTuple):
    index: int
    probability: float
    backfilled: bool = False


# ---------------------------------------------------------------- feature heads

def encode_paths(params, paths, agent):
    """Encoded path and agent-path features, (n, D_p) and (n, D_ap)."""
    fp = params.heads["path_encoder"](path_raw_features(paths, agent))
    fap = params.heads["agent_path_encoder"](agent_path_raw_features(paths, agent))
    return fp, fap


def unique_goals(paths):
    """Distinct path endpoints in first-seen order, plus the path -> goal index map."""
    goals, index, lookup = [], [], {}
    for p in paths:
        key = tuple(np.round(p.end_point, 6))
        if key not in lookup:
            lookup[key] = len(goals)
            goals.append(p.end_point)
        index.append(lookup[key])
    return np.array(goals).reshape(-1, 2), np.array(index, dtype=int)


def classify_paths(params, agent, candidates) -> np.ndarray:
    """Softmax over the agent's candidate paths."""
    paths = candidates.paths if isinstance(candidates, CandidateSet) else candidates
    if len(paths) == 0:
        raise EmptyCandidatesError("no candidate paths; use the path-free decoder")
    fp, fap = encode_paths(params, paths, agent)
    x = np.concatenate([np.broadcast_to(agent.vector, (len(paths), len(agent.vector))), fp, fap], axis=1)
    return np.exp(log_softmax(params.heads["classifier"](x)[:, 0]))


def classify_goals(params, agent, goals) -> np.ndarray:
    if len(goals) == 0:
        raise EmptyCandidatesError("no goal candidates; use the path-free decoder")
    fg = params.heads["goal_encoder"](goal_raw_features(goals, agent))
    x = np.concatenate([np.broadcast_to(agent.vector, (len(goals), len(agent.vector))), fg], axis=1)
    return np.exp(log_softmax(params.heads["classifier"](x)[:, 0]))


def nms_endpoints(endpoints, probabilities, k, radius):
    """Greedy endpoint NMS with backfill from the suppressed set."""
    if k < 1:
        raise ConfigError("K must be >= 1")
    ends = np.asarray(endpoints, dtype=float).reshape(-1, 2)
    probs = np.asarray(probabilities, dtype=float)
    if len(probs) != len(ends):
        raise ValueError("probabilities must align with candidates")
    order = np.argsort(-probs, kind="stable")
    chosen, suppressed = [], []
    alive = np.ones(len(ends), dtype=bool)
    for i in order:
        if len(chosen) == k:
            break
        if not alive[i]:
            continue
        chosen.append(int(i))
        near = np.hypot(*(ends - ends[i]).T) < radius
        near[i] = False
        for j in np.flatnonzero(near & alive):
            suppressed.append(int(j))
        alive &= ~near
        alive[i] = False
    fill = []
    if len(chosen) < k:
        # highest-probability suppressed candidates, in probability order
        rest = [int(i) for i in order if int(i) not in set(chosen)]
        fill = rest[: k - len(chosen)]
    sel = chosen + fill
    p = probs[sel]
    total = p.sum()
    p = p / total if total > 0 else np.full(len(sel), 1.0 / len(sel))
    return [Selection(i, float(q), i in fill) for i, q in zip(sel, p)]


def select_paths_nms(candidates, probabilities, k=6, endpoint_radius=2.0):
    return nms_endpoints(candidates.endpoints, probabilities, k, endpoint_radius)


def regressor_input(agent, cond_feat, history_in):
    return np.concatenate([agent.vector, cond_feat, history_in])


def unroll(out, base=0.0):
    """Map a ``(..., 2T)`` regressor output to (longitudinal, lateral) sequences."""
    t = out.shape[-1] // 2
    return base + np.cumsum(out[..., :t], axis=-1), out[..., t:]


def decode_frenet(params, agent, path, path_feat, history_frenet) -> FrenetTrajectory:
    """Regress (increment-s, d) on ``path``; ``s`` accumulates from the agent's current ``s``."""
    sd = np.asarray(
        [[st.s, st.d] for st in history_frenet] if not isinstance(history_frenet, np.ndarray) else history_frenet,
        dtype=float)
    s0 = sd[-1, 0]
    hist_in = np.stack([(sd[:, 0] - s0) * 0.1, sd[:, 1]], axis=1).ravel()
    out = params.heads["regressor"](regressor_input(agent, path_feat, hist_in))
    s, d = unroll(out, s0)
    return FrenetTrajectory(np.stack([s, d], axis=1), path)


def decode_cartesian(params, agent, cond_feat, history) -> np.ndarray:
    """Regress the trajectory in the agent frame; returns scene-frame waypoints."""
    out = params.heads["regressor"](regressor_input(agent, cond_feat, cartesian_history(history, agent)))
    x, y = unroll(out)
    return to_global(np.stack([x, y], axis=1), agent.origin, agent.heading)


def multimodal_output(params, agent, head="path_free"):
    """(K, T, 2) agent-frame trajectories and (K,) mode log-probabilities."""
    out = params.heads[head](agent.vector)
    k, t = params.n_modes, params.future_steps
    modes = out[: k * 2 * t].reshape(k, 2 * t)
    x, y = unroll(modes)
    return np.stack([x, y], axis=2), log_softmax(out[k * 2 * t:])


def decode_path_free(params, agent, k=None, agent_id=0, head=None) -> PredictionSet:
    head = head or ("multimodal" if params.variant == "multimodal_regression" else "path_free")
    local, logp = multimodal_output(params, agent, head)
    trajs = to_global(local, agent.origin, agent.heading)
    probs = np.exp(logp)
    if k is not None and k < len(probs):
        keep = np.argsort(-probs, kind="stable")[:k]
        trajs, probs = trajs[keep], probs[keep]
    return PredictionSet(trajs, probs / probs.sum(), None, agent_id, "path_free")


def select_decoder(params, agent) -> float:
    """Probability that the agent should use the path-free decoder."""
    return float(sigmoid(params.heads["selector"](agent.vector)[0]))


def _pad(trajs, probs, paths, flags, k):
    """Repeat the most likely mode with zero probability until there are ``k`` modes."""
    while len(trajs) < k:
        trajs.append(trajs[0])
        probs.append(0.0)
        paths.append(paths[0])
        flags.append(True)


def predict(params, scene, agent_id=None, config: Optional[PredictConfig] = None, candidates=None) -> PredictionSet:
    """Full pipeline for one agent of ``scene``."""
    config = config or PredictConfig()
    agent_id = scene.focal_agent_id if agent_id is None else agent_id
    track = scene.agent(agent_id)
    agent = encode_agent(track, scene.dt, scene.map, params.agent_dim)
    k = params.n_modes
    if params.variant == "multimodal_regression":
        return decode_path_free(params, agent, k, agent_id)
    if candidates is None:
        candidates = build_candidates(scene.map, track, scene.dt, params.future_steps, config.sampler, label=False)
    if len(candidates) == 0 or select_decoder(params, agent) > config.selector_threshold:
        return decode_path_free(params, agent, k, agent_id)

    trajs, probs, paths, flags = [], [], [], []
    if params.variant == "goal_based":
        goals, _ = unique_goals(candidates.paths)
        p = classify_goals(params, agent, goals)
        fg = params.heads["goal_encoder"](goal_raw_features(goals, agent))
        for sel in nms_endpoints(goals, p, k, config.nms_radius_m):
            trajs.append(decode_cartesian(params, agent, fg[sel.index], track.history))
            probs.append(sel.probability)
            paths.append(None)
            flags.append(sel.backfilled)
        _pad(trajs, probs, paths, flags, k)
        return PredictionSet(np.array(trajs), np.array(probs), paths, agent_id, "goal", flags)

    p = classify_paths(params, agent, candidates)
    fp, _ = encode_paths(params, candidates.paths, agent)
    for sel in select_paths_nms(candidates, p, k, config.nms_radius_m):
        path = candidates.paths[sel.index]
        if params.frenet:
            _, _, hist_sd = frenet_history(path, track.history)
            ft = decode_frenet(params, agent, path, fp[sel.index], hist_sd)
            trajs.append(frenet_to_cartesian_array(path, ft.s, ft.d))
        else:
            trajs.append(decode_cartesian(params, agent, fp[sel.index], track.history))
        probs.append(sel.probability)
        paths.append(path)
        flags.append(sel.backfilled)
    _pad(trajs, probs, paths, flags, k)
    return PredictionSet(np.array(trajs), np.array(probs), paths, agent_id, "path", flags)
