"""Few-shot regression with MAML and Reptile on a small feedforward network."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DivergenceError, MetaRegError, NumericalError, ShapeError
from .evaluation import compute_metrics, evaluate_target
from .meta import MetaCheckpoint, MetaConfig, meta_train
from .net import NetworkSpec, forward, init_network
from .tasks import NormalizationBounds, TaskDataset, load_task_csv

__all__ = [
    "ConfigError", "DataError", "DivergenceError", "MetaRegError", "NumericalError", "ShapeError",
    "compute_metrics", "evaluate_target", "MetaCheckpoint", "MetaConfig", "meta_train", "NetworkSpec", "forward", "init_network",
    "NormalizationBounds", "TaskDataset", "load_task_csv",
]
