"""Trajectory prediction for several agent classes from fused position, velocity and semantic graphs."""

from .data import (
    ClassVocabulary,
    SceneWindow,
    TrajectoryScene,
    build_windows,
    compute_velocities,
    encode_one_hot,
    load_scene_file,
    synthetic_scene,
)
from .evaluator import MetricsReport, ablation_run, avg_errors, evaluate, min_errors
from .gaussian import GaussianField, nll, sample, split_raw, to_absolute
from .graphs import (
    MixedGraphInputs,
    normalize_adjacency,
    position_adjacency,
    semantic_pair_tensor,
    velocity_adjacency,
)
from .network import ModelConfig, count_params, init_params, model_forward
from .tensor import Tape, Tensor
from .trainer import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, sgd_step, train

__version__ = "0.1.0"
