"""Run configuration: one YAML document drives every command, and command-line
flags override it.

Precedence, highest first: explicit flags, the config document, the
defaults below.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .train import TrainConfig


class ConfigError(ValueError):
    """Raised with every problem found, one per line."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(problems))
        self.problems = problems


DATASETS = ("spirals", "grid_blobs", "image_dir")
ARCHES = ("mlp", "cnn")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 1,
    "backend": "thread",
    "out": "runs/default",
    "model_path": None,
    "plan_path": None,
    "dataset": {"name": "spirals", "n_train": 2000, "n_test": 1000, "noise": 0.2},
    "model": {"arch": "mlp", "sizes": [2, 64, 64, 64, 2]},
    "baseline": {"batch_size": 32, "learning_rate": 3e-3, "epochs": 60, "loss": "cross_entropy"},
    "compress": {"cr": 0.5, "exclude": [0, 6], "step": 0.005},
    "partition": "block",
    "local": {"batch_size": 8, "learning_rate": 1e-3, "epochs": 10, "loss": "mse"},
    "global": {"batch_size": 8, "learning_rate": 1e-3, "epochs": 10, "loss": "cross_entropy"},
    "profile": {"candidates": None, "probe": "half", "exclude_k": 2},
    "cache_dir": None,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("dataset", "model"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    seed: int
    workers: int
    backend: str
    out: Path
    dataset: dict
    model: dict
    baseline: TrainConfig
    local: TrainConfig
    global_: TrainConfig
    cr: float
    exclude: tuple[int, ...]
    step: float
    partition: Any
    profile: dict
    model_path: Path | None = None
    plan_path: Path | None = None
    cache_dir: Path | None = None
    raw: dict = field(default_factory=dict, compare=False)

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)


def load_document(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file {p} does not exist"])
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError([f"config file {p} is not valid YAML: {e}"]) from e
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError([f"config file {p} must hold a mapping at top level"])
    return doc


def _train_section(raw: dict, name: str, seed: int, problems: list[str]) -> TrainConfig | None:
    section = dict(raw.get(name) or {})
    section.setdefault("seed", seed)
    unknown = set(section) - set(TrainConfig.__dataclass_fields__)
    for k in sorted(unknown):
        problems.append(f"{name}.{k}: unknown key")
    section = {k: v for k, v in section.items() if k not in unknown}
    try:
        return TrainConfig(**section)
    except (TypeError, ValueError) as e:
        for msg in str(e).split("; "):
            problems.append(f"{name}: {msg}")
        return None


def resolve(doc: dict, overrides: dict | None = None, need: tuple[str, ...] = ()) -> RunConfig:
    """Merge defaults, ``doc`` and non-None ``overrides`` and validate.

    ``need`` names path fields the calling command requires (``model_path``,
    ``plan_path``); they must exist on disk. All problems are collected
    before raising.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw = _merge(_merge(DEFAULTS, doc), overrides)
    problems: list[str] = []
    known = set(DEFAULTS)
    for k in sorted(set(raw) - known):
        problems.append(f"{k}: unknown key")

    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append(f"seed: must be a non-negative integer (got {seed!r})")
        seed = 0
    workers = raw["workers"]
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        problems.append(f"workers: must be an integer >= 1 (got {workers!r})")
    if raw["backend"] not in ("thread", "process"):
        problems.append(f"backend: must be 'thread' or 'process' (got {raw['backend']!r})")

    ds = raw["dataset"]
    if not isinstance(ds, dict) or ds.get("name") not in DATASETS:
        problems.append(f"dataset.name: must be one of {list(DATASETS)}")
    elif ds["name"] == "image_dir" and not Path(str(ds.get("path", ""))).is_dir():
        problems.append(f"dataset.path: directory {ds.get('path')!r} does not exist")

    m = raw["model"]
    if not isinstance(m, dict) or m.get("arch") not in ARCHES:
        problems.append(f"model.arch: must be one of {list(ARCHES)}")
    elif m["arch"] == "mlp":
        sizes = m.get("sizes")
        if not (isinstance(sizes, list) and len(sizes) >= 2 and all(isinstance(s, int) and s > 0 for s in sizes)):
            problems.append("model.sizes: need a list of at least two positive widths")
    else:
        for key in ("in_channels", "image_size", "num_classes"):
            if not isinstance(m.get(key), int) or m[key] < 1:
                problems.append(f"model.{key}: must be a positive integer")
        ch, st = m.get("channels"), m.get("strides")
        if not (isinstance(ch, list) and isinstance(st, list) and len(ch) == len(st) and ch):
            problems.append("model.channels / model.strides: need equal-length non-empty lists")

    trains = {name: _train_section(raw, name, seed, problems) for name in ("baseline", "local", "global")}

    comp = raw["compress"] or {}
    for k in sorted(set(comp) - {"cr", "exclude", "step"}):
        problems.append(f"compress.{k}: unknown key")
    cr = comp.get("cr", 0.5)
    if not isinstance(cr, (int, float)) or not 0 <= cr < 1:
        problems.append(f"compress.cr: must lie in [0, 1) (got {cr!r})")
    exclude = comp.get("exclude") or []
    if not (isinstance(exclude, list) and all(isinstance(i, int) and i >= 0 for i in exclude)):
        problems.append("compress.exclude: must be a list of layer indices")
        exclude = []
    step = comp.get("step", 0.005)
    if not isinstance(step, (int, float)) or not 0 < step < 1:
        problems.append(f"compress.step: must lie in (0, 1) (got {step!r})")

    part = raw["partition"]
    if not (part == "block" or (isinstance(part, dict) and set(part) in ({"cuts"}, {"per_slice"}))):
        problems.append("partition: must be 'block', {cuts: [...]} or {per_slice: n}")

    prof = raw["profile"] or {}
    if prof.get("probe", "half") not in ("half", "full"):
        problems.append(f"profile.probe: must be 'half' or 'full' (got {prof.get('probe')!r})")
    if not isinstance(prof.get("exclude_k", 0), int) or prof.get("exclude_k", 0) < 0:
        problems.append("profile.exclude_k: must be a non-negative integer")

    paths = {}
    for key in ("model_path", "plan_path", "cache_dir"):
        paths[key] = Path(raw[key]) if raw.get(key) is not None else None
    for key in need:
        if paths[key] is None:
            problems.append(f"{key}: required by this command")
        elif not paths[key].is_file():
            problems.append(f"{key}: file {paths[key]} does not exist")

    if problems:
        raise ConfigError(problems)
    return RunConfig(
        seed=seed, workers=workers, backend=raw["backend"], out=Path(raw["out"]),
        dataset=dict(ds), model=dict(m), baseline=trains["baseline"], local=trains["local"],
        global_=trains["global"], cr=float(cr), exclude=tuple(exclude), step=float(step),
        partition=part, profile={"candidates": None, "probe": "half", "exclude_k": 2, **prof},
        raw=raw, **paths,
    )


def dump_document(cfg: RunConfig) -> str:
    return yaml.safe_dump(_jsonable(cfg.snapshot()), sort_keys=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Path):
        return str(x)
    return x


__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "resolve", "load_document", "dump_document"]
