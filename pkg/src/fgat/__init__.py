"""Online continual learning on multi-scale feature graphs with attention."""

from fgat.estimator import FgatClassifier
from fgat.experiment import ExperimentConfig, run_sequence
from fgat.featio import FeatureSample, TaskManifest, gen_synthetic, read_fmap, write_fmap
from fgat.graphbuild import FeatureGraph, GraphBuilder, build_graph, build_graphs
from fgat.harness import RehearsalBuffer, TrainPlan
from fgat.metrics import AccuracyMatrix, average_accuracy, average_forgetting
from fgat.model import ModelConfig, ModelState, forward, init_model, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "ExperimentConfig",
    "FeatureGraph",
    "FeatureSample",
    "FgatClassifier",
    "GraphBuilder",
    "ModelConfig",
    "ModelState",
    "RehearsalBuffer",
    "TaskManifest",
    "TrainPlan",
    "average_accuracy",
    "average_forgetting",
    "build_graph",
    "build_graphs",
    "forward",
    "gen_synthetic",
    "init_model",
    "load_checkpoint",
    "read_fmap",
    "run_sequence",
    "save_checkpoint",
    "write_fmap",
    "__version__",
]
