"""Decoder ablation: train each decoder on identical data and evaluate side by side."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .errors import ConfigError
from .metrics import evaluate
from .model import VARIANTS
from .predictor import PredictConfig, predict
from .trainer import TrainConfig, prepare_dataset, train

ABLATION_HEADER = "decoder,minFDE_1,MR_1,minFDE_6,MR_6,offroad_rate,lane_dev"


@dataclass
class AblationConfig:
    decoders: tuple = VARIANTS
    train: TrainConfig = field(default_factory=TrainConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)
    workers: int = 1

    def __post_init__(self):
        self.decoders = tuple(self.decoders)
        if not self.decoders:
            raise ConfigError("at least one decoder is required")
        for d in self.decoders:
            if d not in VARIANTS:
                raise ConfigError(f"unknown decoder '{d}' (expected one of {', '.join(VARIANTS)})")


def _predict_focal(job):
    params, scene, config = job
    return predict(params, scene, scene.focal_agent_id, config)


def predict_scenes(params, scenes, config: PredictConfig = None, workers=1):
    """Focal-agent predictions in scene order; ``workers > 1`` fans out over processes."""
    config = config or PredictConfig()
    jobs = [(params, scene, config) for scene in scenes]
    if workers is None or workers <= 1 or len(jobs) < 2:
        return [_predict_focal(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order, so aggregation stays deterministic
        return list(pool.map(_predict_focal, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def evaluate_scenes(params, scenes, config: PredictConfig = None, preds=None, workers=1):
    """Returns ``(MetricsReport, predictions)`` for the focal agents of ``scenes``."""
    preds = preds if preds is not None else predict_scenes(params, scenes, config, workers)
    records = [(p, s.focal_agent.future, s.map) for p, s in zip(preds, scenes)]
    return evaluate(records), preds


def ablation_row(decoder, report) -> str:
    vals = (report.min_fde[1], report.miss_rate[1], report.min_fde[6], report.miss_rate[6],
            report.offroad_rate, report.lane_deviation)
    return ",".join([decoder] + [repr(float(v)) for v in vals])


def run_ablate(train_scenes, val_scenes, config: AblationConfig = None, on_epoch=None):
    """Train and evaluate every decoder; returns ``{decoder: (params, history, report)}``."""
    config = config or AblationConfig()
    samples, _ = prepare_dataset(train_scenes, config.predict.sampler)
    results = {}
    for decoder in config.decoders:
        cb = None if on_epoch is None else (lambda e, r, d=decoder: on_epoch(d, e, r))
        params, history = train(samples, config.train, decoder, on_epoch=cb)
        report, _ = evaluate_scenes(params, val_scenes, config.predict, workers=config.workers)
        results[decoder] = (params, history, report)
    return results


def ablation_csv(results) -> str:
    return "\n".join([ABLATION_HEADER] + [ablation_row(d, r[2]) for d, r in results.items()]) + "\n"
