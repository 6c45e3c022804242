"""Losses, Adam, and the mini-batch loop shared by local and global training."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import cross_entropy_loss, finite_diff_grad, mse_loss
from .model import Layer, run_layers

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainReport",
    "DivergenceError",
    "adam_step",
    "mse_loss",
    "cross_entropy_loss",
    "finite_diff_grad",
    "fit_layers",
    "derive_seed",
]


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-3
    epochs: int = 5
    seed: int = 0
    loss: Literal["mse", "cross_entropy"] = "mse"
    data_fraction: float = 1.0
    train_all: bool = False

    def __post_init__(self):
        problems = []
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.learning_rate < 0:
            problems.append(f"learning_rate must be >= 0 (got {self.learning_rate})")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0 (got {self.epochs})")
        if self.loss not in ("mse", "cross_entropy"):
            problems.append(f"unknown loss {self.loss!r}")
        if not 0 < self.data_fraction <= 1:
            problems.append(f"data_fraction must lie in (0, 1] (got {self.data_fraction})")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, d: dict | None, **defaults) -> "TrainConfig":
        merged = {**defaults, **(d or {})}
        unknown = set(merged) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**merged)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict[str, np.ndarray], learning_rate: float, **kw) -> "AdamState":
        zeros = {k: np.zeros_like(p) for k, p in params.items()}
        return cls(learning_rate, m=zeros, v={k: z.copy() for k, z in zeros.items()}, **kw)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        arrays = {f"m/{k}": a for k, a in self.m.items()} | {f"v/{k}": a for k, a in self.v.items()}
        hyper = np.array([self.learning_rate, self.beta1, self.beta2, self.eps, self.step], dtype=np.float64)
        np.savez(buf, __hyper__=hyper, **arrays)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AdamState":
        with np.load(io.BytesIO(data)) as z:
            lr, b1, b2, eps, step = z["__hyper__"]
            m = {k[2:]: z[k] for k in z.files if k.startswith("m/")}
            v = {k[2:]: z[k] for k in z.files if k.startswith("v/")}
        return cls(float(lr), float(b1), float(b2), float(eps), int(step), m, v)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; parameters visited in name order."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name in sorted(params):
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        new_p[name] = params[name] - state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(state.learning_rate, b1, b2, state.eps, t, new_m, new_v)


def derive_seed(global_seed: int, index: int) -> int:
    """Per-job seed independent of execution order."""
    return int(np.random.SeedSequence([int(global_seed), int(index)]).generate_state(1)[0])


@dataclass
class TrainReport:
    slice_index: int | str
    curve: list[tuple[int, int, float, float]] = field(default_factory=list)  # step, epoch, loss, wall_ms
    best_metric: float = float("nan")
    wall_ms: float = 0.0
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.curve)

    @property
    def losses(self) -> list[float]:
        return [row[2] for row in self.curve]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "epoch", "loss", "wall_ms"])
        for step, epoch, loss, ms in self.curve:
            w.writerow([step, epoch, repr(loss), f"{ms:.3f}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "slice_index": self.slice_index,
            "steps": self.steps,
            "initial_loss": self.curve[0][2] if self.curve else None,
            "final_loss": self.curve[-1][2] if self.curve else None,
            "best_metric": self.best_metric,
            "wall_ms": self.wall_ms,
            "config": self.config,
            **self.extra,
        }


def fit_layers(
    layers: Sequence[Layer],
    trainable: Sequence[int],
    inputs: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    seed: int,
    tag: int | str,
    divergence_factor: float = 1e6,
) -> tuple[list[Layer], TrainReport]:
    """Adam over shuffled mini-batches, updating only layers at ``trainable``
    positions. ``targets`` are features (mse) or labels (cross_entropy).

    Wall-clock covers forward, backward and the update only.
    """
    layers = list(layers)
    rng = np.random.default_rng(seed)
    params = {f"{i}.{k}": v for i in trainable for k, v in layers[i].params().items()}
    state = AdamState.init(params, config.learning_rate)
    report = TrainReport(tag, config=config.to_dict())
    n = inputs.shape[0]
    loss_fn = mse_loss if config.loss == "mse" else cross_entropy_loss
    initial = None
    elapsed = 0.0
    step = 0
    best = float("inf")
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            xb, yb = inputs[idx], targets[idx]
            t0 = time.perf_counter()
            leaves = ad.leaves(params)
            per_layer: dict[int, dict] = {}
            for name, var in leaves.items():
                i, k = name.split(".", 1)
                per_layer.setdefault(int(i), {})[k] = var
            for i in trainable:
                per_layer.setdefault(i, {})
            overrides = {i: {**layers[i].params(), **per_layer[i]} for i in per_layer}
            loss = loss_fn(run_layers(layers, xb, overrides), yb)
            lv = float(ad.value(loss))
            if not np.isfinite(lv) or (initial is not None and initial > 0 and lv > divergence_factor * initial):
                raise DivergenceError(
                    f"training {tag!r} diverged at step {step} (epoch {epoch}): loss {lv:.3e}, "
                    f"initial {initial if initial is not None else float('nan'):.3e}"
                )
            if isinstance(loss, ad.Var) and params:
                grads = ad.grad(loss, leaves)
                params, state = adam_step(params, grads, state)
            elapsed += time.perf_counter() - t0
            if initial is None:
                initial = lv
            step += 1
            epoch_losses.append(lv)
            report.curve.append((step, epoch, lv, elapsed * 1e3))
        best = min(best, float(np.mean(epoch_losses)) if epoch_losses else best)
    report.wall_ms = elapsed * 1e3
    report.best_metric = best
    for i in trainable:
        own = {k: params[f"{i}.{k}"] for k in layers[i].params()}
        if own:
            layers[i] = layers[i].with_params(own)
    return layers, report
