"""Joint instance and semantic segmentation of point clouds.

Training couples a per-point embedding network with a self-prediction
objective: points are split into groups, groups are paired, and each
group's labels are propagated to its partner over an affinity graph on
the learned embeddings. Inference runs mean-shift clustering over the
instance embeddings and merges clusters across blocks.
"""

from .config import RunConfig, load_config, parse_config
from .data import (Manifest, Scene, SceneSpec, generate_scene, generate_shape,
                   read_manifest, read_ptsseg, write_manifest, write_ptsseg)
from .errors import (CheckpointError, ConfigError, ContractError, DataError,
                     DegenerateGraphError, DimensionError, DomainError,
                     GenerationError, ParseError, SingularMatrixError)
from .estimator import SelfPredictionSegmenter
from .inference import ScenePrediction, predict_scene
from .metrics import evaluate_scene, format_report, mean_reports
from .nets import Arch, ModelParams, init_params, load_checkpoint, save_checkpoint
from .training import TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Arch", "CheckpointError", "ConfigError", "ContractError", "DataError",
    "DegenerateGraphError", "DimensionError", "DomainError", "GenerationError",
    "Manifest", "ModelParams", "ParseError", "RunConfig", "Scene",
    "ScenePrediction", "SceneSpec", "SelfPredictionSegmenter",
    "SingularMatrixError", "TrainResult", "evaluate_scene", "format_report",
    "generate_scene", "generate_shape", "init_params", "load_checkpoint",
    "load_config", "mean_reports", "parse_config", "predict_scene",
    "read_manifest", "read_ptsseg", "save_checkpoint", "train",
    "write_manifest", "write_ptsseg",
]
