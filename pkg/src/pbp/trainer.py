"""Teacher-forced training of every head with hand-written reverse-mode gradients."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .errors import ConfigError, NonFiniteLossError, ShapeError
from .features import (
    agent_path_raw_features,
    cartesian_history,
    encode_agent,
    frenet_future,
    frenet_history,
    goal_raw_features,
    path_raw_features,
)
from .frenet import FrenetTrajectory
from .geometry import to_local
from .model import ModelParams, init_params
from .nn import AdamW, log_softmax, sigmoid
from .predictor import unique_goals
from .sampler import SamplerConfig, build_candidates

log = logging.getLogger(__name__)

CSV_HEADER = "epoch,cls,reg_s,reg_d,selector,path_free,total"


@dataclass
class TrainConfig:
    lambda_lateral: float = 1.0
    lambda_cls: float = 1.0
    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 64
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.lambda_lateral <= 0 or self.lambda_cls <= 0:
            raise ConfigError("lambda_lateral and lambda_cls must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class LossReport:
    cls_loss: float = 0.0
    reg_loss_s: float = 0.0
    reg_loss_d: float = 0.0
    selector_loss: float = 0.0
    path_free_loss: float = 0.0
    total: float = 0.0
    n_skipped: int = 0

    def csv_row(self, epoch) -> str:
        vals = (self.cls_loss, self.reg_loss_s, self.reg_loss_d, self.selector_loss, self.path_free_loss, self.total)
        return ",".join([str(epoch)] + [repr(float(v)) for v in vals])

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- losses

def smooth_l1(x, y):
    """Elementwise smooth-L1 with the quadratic / linear transition at 1."""
    r = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.where(r < 1.0, 0.5 * r * r, r - 0.5)


def smooth_l1_grad(x, y):
    """Derivative of ``smooth_l1`` with respect to ``x``."""
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.clip(r, -1.0, 1.0)


def regression_loss(pred, gt, lambda_lateral=1.0) -> float:
    """Sum over time of longitudinal smooth-L1 plus weighted lateral smooth-L1."""
    p = pred.sd if isinstance(pred, FrenetTrajectory) else np.asarray(pred, dtype=float)
    g = gt.sd if isinstance(gt, FrenetTrajectory) else np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise ShapeError(f"trajectory lengths differ: {p.shape} vs {g.shape}")
    return float(smooth_l1(p[:, 0], g[:, 0]).sum() + lambda_lateral * smooth_l1(p[:, 1], g[:, 1]).sum())


# ---------------------------------------------------------------- samples

@dataclass(eq=False)
class TrainingSample:
    """Everything the losses need for one agent, precomputed once per dataset."""
    agent_vec: np.ndarray
    is_path_free: bool
    future_local: np.ndarray            # (T, 2) agent frame
    cart_hist: np.ndarray               # (2T',)
    gt_index: Optional[int] = None
    path_raw: Optional[np.ndarray] = None
    agent_path_raw: Optional[np.ndarray] = None
    frenet_hist: Optional[np.ndarray] = None
    frenet_target: Optional[np.ndarray] = None   # (T, 2) (s - s0, d) on the gt path
    goal_raw: Optional[np.ndarray] = None
    goal_index: Optional[int] = None

    @property
    def on_path(self) -> bool:
        return self.gt_index is not None


def prepare_sample(scene, agent_id=None, sampler: SamplerConfig = None, agent_dim=48, future_steps=30):
    """Build a ``TrainingSample`` or return ``None`` when the agent has no usable future."""
    agent_id = scene.focal_agent_id if agent_id is None else agent_id
    track = scene.agent(agent_id)
    if track.future is None or len(track.future) != future_steps:
        return None
    agent = encode_agent(track, scene.dt, scene.map, agent_dim)
    cands = build_candidates(scene.map, track, scene.dt, future_steps, sampler or SamplerConfig())
    sample = TrainingSample(
        agent.vector, cands.is_path_free,
        to_local(track.future, agent.origin, agent.heading),
        cartesian_history(track.history, agent),
    )
    if cands.gt_index is None:
        return sample
    gt = cands.paths[cands.gt_index]
    flat, s0, _ = frenet_history(gt, track.history)
    target = frenet_future(gt, track.history, track.future)
    target[:, 0] -= s0
    goals, gidx = unique_goals(cands.paths)
    sample.gt_index = cands.gt_index
    sample.path_raw = path_raw_features(cands.paths, agent)
    sample.agent_path_raw = agent_path_raw_features(cands.paths, agent)
    sample.frenet_hist = flat
    sample.frenet_target = target
    sample.goal_raw = goal_raw_features(goals, agent)
    sample.goal_index = int(gidx[cands.gt_index])
    return sample


def prepare_dataset(scenes, sampler: SamplerConfig = None, agent_dim=48, future_steps=30):
    """Returns ``(samples, n_skipped)``."""
    samples, skipped = [], 0
    for scene in scenes:
        s = prepare_sample(scene, None, sampler, agent_dim, future_steps)
        if s is None:
            skipped += 1
        else:
            samples.append(s)
    if skipped:
        log.warning("skipped %d agents without a complete future", skipped)
    return samples, skipped


# ---------------------------------------------------------------- loss + gradient

def _segment_log_softmax(logits, offsets):
    out = np.empty_like(logits)
    for a, b in zip(offsets[:-1], offsets[1:]):
        out[a:b] = log_softmax(logits[a:b])
    return out


def _wta(out, targets, n_modes, future_steps, weight):
    """Winner-takes-all smooth-L1 plus mode cross-entropy; returns (loss sum, grad)."""
    k, t = n_modes, future_steps
    n = len(out)
    modes = out[:, : k * 2 * t].reshape(n, k, 2, t)
    x = np.cumsum(modes[:, :, 0], axis=2)
    y = modes[:, :, 1]
    fde = np.hypot(x[:, :, -1] - targets[:, None, -1, 0], y[:, :, -1] - targets[:, None, -1, 1])
    win = np.argmin(fde, axis=1)
    rows = np.arange(n)
    xw, yw = x[rows, win], y[rows, win]
    reg = smooth_l1(xw, targets[:, :, 0]).sum() + smooth_l1(yw, targets[:, :, 1]).sum()
    logp = np.stack([log_softmax(z) for z in out[:, k * 2 * t:]]) if n else np.zeros((0, k))
    ce = -logp[rows, win].sum()
    grad = np.zeros_like(out)
    gmodes = np.zeros((n, k, 2, t))
    gx = smooth_l1_grad(xw, targets[:, :, 0])
    gmodes[rows, win, 0] = np.cumsum(gx[:, ::-1], axis=1)[:, ::-1]
    gmodes[rows, win, 1] = smooth_l1_grad(yw, targets[:, :, 1])
    grad[:, : k * 2 * t] = gmodes.reshape(n, -1)
    gl = np.exp(logp)
    gl[rows, win] -= 1.0
    grad[:, k * 2 * t:] = gl
    return (reg + ce) * weight, grad * weight


def loss_and_grad(params: ModelParams, batch, config: TrainConfig, need_grad=True):
    """Batch-averaged ``LossReport`` and per-head gradient lists (aligned with ``MLP.arrays``)."""
    heads = params.heads
    grads = {name: mlp.zeros_like() for name, mlp in heads.items()} if need_grad else None
    rep = LossReport()
    k, t = params.n_modes, params.future_steps
    batch = list(batch)
    if not batch:
        return rep, grads

    def back(name, cache, g):
        if need_grad:
            return heads[name].backward(cache, g, grads[name])[0]
        return None

    if params.variant == "multimodal_regression":
        out, cache = heads["multimodal"].forward(np.stack([s.agent_vec for s in batch]))
        loss, g = _wta(out, np.stack([s.future_local for s in batch]), k, t, 1.0 / len(batch))
        rep.path_free_loss = float(loss)
        back("multimodal", cache, g)
        rep.total = rep.path_free_loss
        return rep, grads

    # selector: binary cross-entropy on the path-free label, every agent
    a_all = np.stack([s.agent_vec for s in batch])
    labels = np.array([1.0 if s.is_path_free else 0.0 for s in batch])
    z, cache = heads["selector"].forward(a_all)
    z = z[:, 0]
    rep.selector_loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    back("selector", cache, ((sigmoid(z) - labels) / len(batch))[:, None])

    free = [s for s in batch if s.is_path_free]
    if free:
        out, cache = heads["path_free"].forward(np.stack([s.agent_vec for s in free]))
        loss, g = _wta(out, np.stack([s.future_local for s in free]), k, t, 1.0 / len(free))
        rep.path_free_loss = float(loss)
        back("path_free", cache, g)

    on = [s for s in batch if s.on_path]
    if on:
        n_on = len(on)
        a_on = np.stack([s.agent_vec for s in on])
        goal = params.variant == "goal_based"
        if goal:
            raws = [s.goal_raw for s in on]
            gt_local = [s.goal_index for s in on]
            fp, enc_cache = heads["goal_encoder"].forward(np.concatenate(raws))
        else:
            raws = [s.path_raw for s in on]
            gt_local = [s.gt_index for s in on]
            fp, enc_cache = heads["path_encoder"].forward(np.concatenate(raws))
            fap, ap_cache = heads["agent_path_encoder"].forward(np.concatenate([s.agent_path_raw for s in on]))
        counts = np.array([len(r) for r in raws])
        offsets = np.concatenate([[0], np.cumsum(counts)])
        gt_rows = offsets[:-1] + np.array(gt_local)
        a_rep = np.repeat(a_on, counts, axis=0)
        cls_in = np.concatenate([a_rep, fp] if goal else [a_rep, fp, fap], axis=1)
        logits, cls_cache = heads["classifier"].forward(cls_in)
        logp = _segment_log_softmax(logits[:, 0], offsets)
        rep.cls_loss = float(-logp[gt_rows].sum() / n_on)

        # teacher forcing: regress only along the ground-truth path / goal
        if params.frenet:
            hist = np.stack([s.frenet_hist for s in on])
            target = np.stack([s.frenet_target for s in on])
        else:
            hist = np.stack([s.cart_hist for s in on])
            target = np.stack([s.future_local for s in on])
        reg_in = np.concatenate([a_on, fp[gt_rows], hist], axis=1)
        out, reg_cache = heads["regressor"].forward(reg_in)
        lon = np.cumsum(out[:, :t], axis=1)
        lat = out[:, t:]
        lam = config.lambda_lateral
        rep.reg_loss_s = float(smooth_l1(lon, target[:, :, 0]).sum() / n_on)
        rep.reg_loss_d = float(smooth_l1(lat, target[:, :, 1]).sum() / n_on)

        if need_grad:
            g_logits = np.exp(logp)
            g_logits[gt_rows] -= 1.0
            g_cls_in = back("classifier", cls_cache, (config.lambda_cls * g_logits / n_on)[:, None])
            a_dim, p_dim = a_on.shape[1], fp.shape[1]
            g_fp = g_cls_in[:, a_dim:a_dim + p_dim].copy()
            g_out = np.empty_like(out)
            gs = smooth_l1_grad(lon, target[:, :, 0])
            g_out[:, :t] = np.cumsum(gs[:, ::-1], axis=1)[:, ::-1]
            g_out[:, t:] = lam * smooth_l1_grad(lat, target[:, :, 1])
            g_reg_in = back("regressor", reg_cache, g_out / n_on)
            np.add.at(g_fp, gt_rows, g_reg_in[:, a_dim:a_dim + p_dim])
            if goal:
                back("goal_encoder", enc_cache, g_fp)
            else:
                back("path_encoder", enc_cache, g_fp)
                back("agent_path_encoder", ap_cache, g_cls_in[:, a_dim + p_dim:])

    rep.total = (config.lambda_cls * rep.cls_loss + rep.reg_loss_s + config.lambda_lateral * rep.reg_loss_d
                 + rep.selector_loss + rep.path_free_loss)
    return rep, grads


def total_loss(batch, params: ModelParams, config: TrainConfig) -> LossReport:
    return loss_and_grad(params, batch, config, need_grad=False)[0]


_HEAD_OF = {
    "cls_loss": "classifier",
    "reg_loss_s": "regressor",
    "reg_loss_d": "regressor",
    "selector_loss": "selector",
    "path_free_loss": "path_free",
}


def _check_finite(rep: LossReport, params: ModelParams):
    for name, head in _HEAD_OF.items():
        if not np.isfinite(getattr(rep, name)):
            if params.variant == "multimodal_regression":
                head = "multimodal"
            raise NonFiniteLossError(f"non-finite {name} in head '{head}'", head=head)


# ---------------------------------------------------------------- training loop

def train(dataset, config: TrainConfig = None, variant="pbp", params: ModelParams = None,
          sampler: SamplerConfig = None, on_epoch=None):
    """Train on ``dataset`` (scenes or prepared samples).

    Returns ``(params, history)`` where ``history`` holds one sample-weighted
    mean ``LossReport`` per epoch.
    """
    config = config or TrainConfig()
    if params is None:
        params = init_params(variant, config.seed)
    else:
        params = params.copy()
    dataset = list(dataset)
    skipped = 0
    if dataset and not isinstance(dataset[0], TrainingSample):
        dataset, skipped = prepare_dataset(dataset, sampler, params.agent_dim, params.future_steps)
    if not dataset:
        raise ConfigError("training set is empty")

    names = sorted(params.heads)
    opt = AdamW(params.arrays, config.learning_rate, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history = []
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        acc = np.zeros(6)
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start:start + config.batch_size]]
            rep, grads = loss_and_grad(params, batch, config)
            _check_finite(rep, params)
            opt.step([g for name in names for g in grads[name]])
            acc += len(batch) * np.array([rep.cls_loss, rep.reg_loss_s, rep.reg_loss_d, rep.selector_loss,
                                          rep.path_free_loss, rep.total])
        epoch_rep = LossReport(*(acc / n).tolist(), n_skipped=skipped)
        history.append(epoch_rep)
        if on_epoch is not None:
            on_epoch(epoch, epoch_rep)
    return params, history


def history_csv(history) -> str:
    lines = [CSV_HEADER] + [rep.csv_row(i) for i, rep in enumerate(history, start=1)]
    return "\n".join(lines) + "\n"
