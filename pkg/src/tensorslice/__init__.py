"""Slice-wise tensorization of small neural networks: MPO and Tucker
factorizations, feature-distillation healing per slice, and the global and
hybrid baselines."""

__version__ = "0.1.0"

from .decompose import CompressionPlan, MpoLayer, PlanEntry, TuckerConv  # noqa: E402
from .distill import (  # noqa: E402
    FeatureCache,
    capture_features,
    distill_slice,
    global_finetune,
    hybrid_local_global,
    local_tensorize,
)
from .model import Dataset, Network, Slice, evaluate, load, save  # noqa: E402
from .schedule import ScheduleReport, run_jobs  # noqa: E402
from .sensitivity import SensitivityRecord, layer_sensitivity, select_exclusions  # noqa: E402
from .train import TrainConfig, TrainReport  # noqa: E402

__all__ = [
    "__version__", "CompressionPlan", "MpoLayer", "PlanEntry", "TuckerConv", "FeatureCache",
    "capture_features", "distill_slice", "global_finetune", "hybrid_local_global", "local_tensorize",
    "Dataset", "Network", "Slice", "evaluate", "load", "save", "ScheduleReport", "run_jobs",
    "SensitivityRecord", "layer_sensitivity", "select_exclusions", "TrainConfig", "TrainReport",
]
