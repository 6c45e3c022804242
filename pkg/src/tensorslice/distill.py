"""Slice-wise feature distillation: capture pretrained slice activations once,
heal each tensorized slice against them in isolation, and splice the healed
slices back. Global fine-tuning and the local-then-global schedule are the
baselines."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .decompose import CompressionPlan
from .model import (
    Dataset,
    Layer,
    Network,
    Slice,
    model_checksum,
    replace_slice,
    tensorize_slice,
)
from .schedule import ScheduleReport, run_jobs
from .tensor import load_tensor, save_tensor
from .train import TrainConfig, TrainReport, derive_seed, fit_layers


class CacheMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureCache:
    """Pretrained activations entering and leaving one slice.

    ``inputs``/``outputs`` hold all captured samples stacked along axis 0;
    ``batch_size`` is the capture batch used to split them.
    """

    slice_index: int
    slice: Slice
    inputs: np.ndarray
    outputs: np.ndarray
    sample_indices: np.ndarray
    checksum: str
    batch_size: int = 256

    def __post_init__(self):
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise CacheMismatchError(
                f"{self.inputs.shape[0]} input samples but {self.outputs.shape[0]} outputs"
            )
        for a in (self.inputs, self.outputs):
            a.flags.writeable = False

    @property
    def sample_count(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_batches(self) -> list[np.ndarray]:
        return [self.inputs[i:i + self.batch_size] for i in range(0, self.sample_count, self.batch_size)]

    @property
    def output_batches(self) -> list[np.ndarray]:
        return [self.outputs[i:i + self.batch_size] for i in range(0, self.sample_count, self.batch_size)]

    def directory(self, root) -> Path:
        return Path(root) / self.checksum / f"slice-{self.slice_index}"

    def save(self, root) -> Path:
        d = self.directory(root)
        d.mkdir(parents=True, exist_ok=True)
        save_tensor(d / "inputs.bin", self.inputs)
        save_tensor(d / "outputs.bin", self.outputs)
        meta = {
            "slice_index": self.slice_index,
            "start": self.slice.start,
            "end": self.slice.end,
            "sample_count": self.sample_count,
            "batch_size": self.batch_size,
            "checksum": self.checksum,
            "sample_indices": self.sample_indices.tolist(),
        }
        (d / "meta").write_text(json.dumps(meta, indent=1))
        return d

    @classmethod
    def load(cls, root, checksum: str, slice_index: int) -> "FeatureCache":
        d = Path(root) / checksum / f"slice-{slice_index}"
        meta = json.loads((d / "meta").read_text())
        if meta["checksum"] != checksum:
            raise CacheMismatchError(f"cache at {d} records checksum {meta['checksum']}, expected {checksum}")
        return cls(
            slice_index=meta["slice_index"],
            slice=Slice(meta["start"], meta["end"]),
            inputs=load_tensor(d / "inputs.bin"),
            outputs=load_tensor(d / "outputs.bin"),
            sample_indices=np.asarray(meta["sample_indices"], dtype=np.int64),
            checksum=meta["checksum"],
            batch_size=meta["batch_size"],
        )


def subset_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    """First ``ceil(fraction * n)`` entries of a seeded permutation, sorted.

    Smaller fractions give subsets of larger ones under the same seed.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = math.ceil(fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:k])


def capture_features(net: Network, data: Dataset, slices: Sequence[Slice], fraction: float = 1.0,
                     seed: int = 0, batch_size: int = 256, cache_dir=None,
                     slice_ids: Sequence[int] | None = None) -> list[FeatureCache]:
    """One forward sweep over a seeded subset of ``data`` recording, for every
    slice, the activations at its start and end boundaries."""
    idx = subset_indices(len(data), fraction, seed)
    x = data.inputs[idx]
    slice_ids = list(range(len(slices))) if slice_ids is None else list(slice_ids)
    wanted = {s.start for s in slices} | {s.end for s in slices}
    acts: dict[int, list[np.ndarray]] = {b: [] for b in wanted}
    for lo in range(0, x.shape[0], batch_size):
        h = x[lo:lo + batch_size]
        if 0 in wanted:
            acts[0].append(h)
        for i, layer in enumerate(net.layers):
            h = layer.apply(h)
            if i + 1 in wanted:
                acts[i + 1].append(h)
    stacked = {b: np.concatenate(v) for b, v in acts.items()}
    checksum = model_checksum(net)
    caches = []
    for sid, s in zip(slice_ids, slices):
        cache = FeatureCache(sid, s, stacked[s.start], stacked[s.end], idx, checksum, batch_size)
        if cache_dir is not None:
            cache.save(cache_dir)
        caches.append(cache)
    return caches


def _trainable(layers: Sequence[Layer], train_all: bool) -> list[int]:
    return [i for i, l in enumerate(layers) if l.params() and (train_all or l.tensorized)]


def distill_slice(layers: Sequence[Layer], cache: FeatureCache, config: TrainConfig,
                  seed: int | None = None, expected_checksum: str | None = None,
                  slice_index: int | None = None) -> tuple[list[Layer], TrainReport]:
    """Fit the slice's tensorized parameters so its output on the cached
    inputs matches the cached pretrained outputs (batch-normalized MSE)."""
    if expected_checksum is not None and cache.checksum != expected_checksum:
        raise CacheMismatchError(
            f"cache captured from model {cache.checksum[:12]}, expected {expected_checksum[:12]}"
        )
    if slice_index is not None and cache.slice_index != slice_index:
        raise CacheMismatchError(f"cache belongs to slice {cache.slice_index}, not {slice_index}")
    if config.loss != "mse":
        config = replace(config, loss="mse")
    seed = config.seed if seed is None else seed
    return fit_layers(layers, _trainable(layers, config.train_all), cache.inputs, cache.outputs,
                      config, seed, cache.slice_index)


@dataclass(frozen=True, eq=False)
class SliceJob:
    """Everything one slice needs, picklable for process workers."""

    index: int
    layers: tuple[Layer, ...]
    cache: FeatureCache
    config: TrainConfig
    seed: int
    checksum: str

    def __call__(self):
        return distill_slice(self.layers, self.cache, self.config, seed=self.seed,
                             expected_checksum=self.checksum, slice_index=self.index)


class LocalReports(list):
    """Per-slice :class:`TrainReport` list; ``schedule`` holds pool timings."""

    schedule: ScheduleReport | None = None


def build_slice_jobs(net: Network, data: Dataset, slices: Sequence[Slice], plan: CompressionPlan,
                     config: TrainConfig, cache_dir=None) -> tuple[Network, list[SliceJob]]:
    """Tensorize every planned slice and pair it with its captured features.

    Returns the decomposed (not yet healed) network and one job per slice that
    contains at least one tensorized layer.
    """
    checksum = model_checksum(net)
    decomposed = net
    active = []
    for i, s in enumerate(slices):
        if any(idx in s for idx in plan.active()):
            decomposed = tensorize_slice(decomposed, s, plan.restricted(s.start, s.end))
            active.append(i)
    caches = capture_features(net, data, [slices[i] for i in active], config.data_fraction,
                              seed=config.seed, cache_dir=cache_dir, slice_ids=active)
    jobs = [
        SliceJob(i, decomposed.layers[slices[i].start:slices[i].end], cache, config,
                 derive_seed(config.seed, i), checksum)
        for i, cache in zip(active, caches)
    ]
    return decomposed, jobs


def local_tensorize(net: Network, data: Dataset, slices: Sequence[Slice], plan: CompressionPlan,
                    config: TrainConfig, workers: int = 1, backend: str = "thread",
                    cache_dir=None) -> tuple[Network, LocalReports]:
    """Decompose and heal each slice independently, then reassemble."""
    decomposed, jobs = build_slice_jobs(net, data, slices, plan, config, cache_dir)
    results, sched = run_jobs(jobs, workers=workers, backend=backend)
    out = decomposed
    reports = LocalReports()
    for job, (layers, report) in zip(jobs, results):
        out = replace_slice(out, slices[job.index], layers)
        reports.append(report)
    reports.schedule = sched
    return out, reports


def global_finetune(net: Network, data: Dataset, config: TrainConfig) -> tuple[Network, TrainReport]:
    """End-to-end cross-entropy training of the tensorized layers; all other
    layers stay frozen unless ``config.train_all``."""
    cfg = replace(config, loss="cross_entropy") if config.loss != "cross_entropy" else config
    idx = subset_indices(len(data), cfg.data_fraction, cfg.seed)
    layers, report = fit_layers(net.layers, _trainable(net.layers, cfg.train_all),
                                data.inputs[idx], data.labels[idx], cfg, cfg.seed, "global")
    return Network(tuple(layers), net.input_shape), report


def hybrid_local_global(net: Network, data: Dataset, slices: Sequence[Slice], plan: CompressionPlan,
                        local_cfg: TrainConfig, global_cfg: TrainConfig, workers: int = 1,
                        backend: str = "thread", cache_dir=None) -> tuple[Network, dict]:
    """Local healing as initialization, followed by global fine-tuning."""
    local_net, local_reports = local_tensorize(net, data, slices, plan, local_cfg, workers, backend, cache_dir)
    final, global_report = global_finetune(local_net, data, global_cfg)
    return final, {"local": local_reports, "global": global_report}


__all__ = [
    "FeatureCache", "CacheMismatchError", "SliceJob", "LocalReports", "subset_indices",
    "capture_features", "distill_slice", "build_slice_jobs", "local_tensorize",
    "global_finetune", "hybrid_local_global",
]

