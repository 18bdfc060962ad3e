"""Path-based multimodal trajectory prediction on lane graphs."""

from .errors import PBPError
from .estimators import PathBasedPredictor
from .frenet import FrenetState, FrenetTrajectory, frenet_to_cartesian, project_to_frenet
from .lane_graph import AgentTrack, LaneGraph, LaneSegment, Scene, load_scene, save_scene
from .metrics import MetricsReport, evaluate
from .model import ModelParams, init_params, load_params, save_params
from .paths import ReferencePath
from .predictor import PredictConfig, PredictionSet, predict
from .sampler import CandidateSet, SamplerConfig, build_candidates, sample_candidate_paths
from .scenario_gen import GenConfig, generate, split
from .trainer import LossReport, TrainConfig, train

__version__ = "0.1.0"
