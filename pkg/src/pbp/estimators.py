"""scikit-learn style wrapper around training and inference."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ablation import evaluate_scenes, predict_scenes
from .model import VARIANTS
from .predictor import PredictConfig
from .sampler import SamplerConfig
from .trainer import TrainConfig, train
from .errors import ConfigError
from .validation import check_positive, check_scenes


class PathBasedPredictor(BaseEstimator):
    """Trajectory predictor over lists of :class:`~pbp.lane_graph.Scene`.

    ``fit`` trains on the focal agent of each scene; ``predict`` returns one
    ``PredictionSet`` per scene. ``decoder`` selects the full path-based model
    or one of the ablation baselines.
    """

    def __init__(self, decoder="pbp", epochs=64, batch_size=4, learning_rate=5e-4, weight_decay=1e-4,
                 lambda_cls=1.0, lambda_lateral=1.0, nms_radius_m=2.0, sampler=None, random_state=0):
        self.decoder = decoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.lambda_cls = lambda_cls
        self.lambda_lateral = lambda_lateral
        self.nms_radius_m = nms_radius_m
        self.sampler = sampler
        self.random_state = random_state

    def _sampler(self):
        if self.sampler is None:
            return SamplerConfig()
        if isinstance(self.sampler, dict):
            return SamplerConfig.from_dict(self.sampler)
        return self.sampler

    def _predict_config(self):
        return PredictConfig(self._sampler(), check_positive(self.nms_radius_m, "nms_radius_m", strict=False))

    def fit(self, X, y=None):
        if self.decoder not in VARIANTS:
            raise ConfigError(f"unknown decoder '{self.decoder}'")
        scenes = check_scenes(X, require_future=True)
        cfg = TrainConfig(self.lambda_lateral, self.lambda_cls, self.learning_rate, self.weight_decay,
                          int(self.epochs), int(self.batch_size), int(self.random_state))
        self.params_, self.history_ = train(scenes, cfg, self.decoder, sampler=self._sampler())
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return predict_scenes(self.params_, check_scenes(X), self._predict_config())

    def evaluate(self, X):
        """Full ``MetricsReport`` on scenes with ground-truth futures."""
        check_is_fitted(self, "params_")
        return evaluate_scenes(self.params_, check_scenes(X, require_future=True), self._predict_config())[0]

    def score(self, X, y=None):
        """Negative minFDE over six modes (higher is better)."""
        return -self.evaluate(X).min_fde[6]
