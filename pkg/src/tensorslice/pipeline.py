"""Glue shared by the CLI, the experiment scripts and the acceptance suite:
dataset and model construction from a config, baseline training, and the
three healing schedules on a given plan."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .config import RunConfig
from .data import make_dataset
from .decompose import CompressionPlan
from .distill import global_finetune, hybrid_local_global, local_tensorize
from .model import (
    Dataset,
    Network,
    Slice,
    block_partition,
    evaluate,
    make_cnn,
    make_mlp,
    partition,
    plan_for_target,
    tensorize,
    uniform_partition,
)
from .train import TrainConfig, TrainReport, fit_layers

# Toy presets used by the acceptance suite and scripts. The CNN's first conv
# (layer 0) and the dense head (layer 7) stay dense, like the MLP's first and
# last layers.
MLP_PRESET = {
    "dataset": {"name": "spirals", "n_train": 2000, "n_test": 1000, "noise": 0.2},
    "model": {"arch": "mlp", "sizes": [2, 64, 64, 64, 2]},
    "baseline": {"batch_size": 32, "learning_rate": 3e-3, "epochs": 60, "loss": "cross_entropy"},
    "compress": {"cr": 0.5, "exclude": [0, 6]},
    "local": {"batch_size": 8, "learning_rate": 1e-3, "epochs": 10},
    "global": {"batch_size": 8, "learning_rate": 1e-3, "epochs": 10},
}

CNN_PRESET = {
    "dataset": {"name": "grid_blobs", "n_train": 4000, "n_test": 3000, "noise": 0.3},
    "model": {"arch": "cnn", "in_channels": 1, "image_size": 8, "channels": [16, 32, 32],
              "strides": [1, 2, 2], "num_classes": 6},
    "baseline": {"batch_size": 32, "learning_rate": 2e-3, "epochs": 15, "loss": "cross_entropy"},
    "compress": {"cr": 0.5, "exclude": [0, 7]},
    "local": {"batch_size": 8, "learning_rate": 1e-3, "epochs": 5},
    "global": {"batch_size": 16, "learning_rate": 5e-4, "epochs": 5},
}


def build_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    return make_dataset(cfg.dataset, "train", cfg.seed), make_dataset(cfg.dataset, "test", cfg.seed)


def build_model(spec: dict, seed: int) -> Network:
    if spec["arch"] == "mlp":
        return make_mlp(spec["sizes"], seed=seed)
    return make_cnn(spec["in_channels"], spec["image_size"], spec["channels"], spec["strides"],
                    spec["num_classes"], seed=seed)


def train_baseline(net: Network, train: Dataset, config: TrainConfig) -> tuple[Network, TrainReport]:
    """Supervised training of every layer from scratch."""
    cfg = replace(config, loss="cross_entropy")
    trainable = [i for i, l in enumerate(net.layers) if l.params()]
    layers, report = fit_layers(net.layers, trainable, train.inputs, train.labels, cfg, cfg.seed, "baseline")
    return Network(tuple(layers), net.input_shape), report


def slices_for(net: Network, spec) -> list[Slice]:
    if spec == "block":
        return block_partition(net)
    if "cuts" in spec:
        return partition(net, spec["cuts"])
    return uniform_partition(net, spec["per_slice"])


def make_plan(net: Network, cr: float, exclude: Sequence[int] = (), step: float = 0.005) -> CompressionPlan:
    return plan_for_target(net, cr, exclude=exclude, step=step)


@dataclass
class Outcome:
    method: str
    net: Network
    accuracy: float
    reports: object


def run_local(net, train, test, slices, plan, cfg: TrainConfig, workers=1, backend="thread",
              cache_dir=None) -> Outcome:
    out, reports = local_tensorize(net, train, slices, plan, cfg, workers, backend, cache_dir)
    return Outcome("local", out, evaluate(out, test)["accuracy"], reports)


def run_global(net, train, test, plan, cfg: TrainConfig) -> Outcome:
    out, report = global_finetune(tensorize(net, plan), train, cfg)
    return Outcome("global", out, evaluate(out, test)["accuracy"], report)


def run_hybrid(net, train, test, slices, plan, local_cfg: TrainConfig, global_cfg: TrainConfig,
               workers=1, backend="thread", cache_dir=None) -> Outcome:
    out, reports = hybrid_local_global(net, train, slices, plan, local_cfg, global_cfg, workers, backend, cache_dir)
    return Outcome("hybrid", out, evaluate(out, test)["accuracy"], reports)


__all__ = [
    "MLP_PRESET", "CNN_PRESET", "Outcome", "build_datasets", "build_model", "train_baseline",
    "slices_for", "make_plan", "run_local", "run_global", "run_hybrid",
]
