"""Built-in synthetic datasets (network-free) plus an optional loader for an
image directory stored as ``.npz``."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import Dataset


def spirals(n: int, noise: float = 0.2, turns: float = 1.5, seed: int = 0, split: str = "train") -> Dataset:
    """Two interleaved spirals in the plane, ``n`` points split evenly."""
    rng = np.random.default_rng(seed)
    half = n // 2
    counts = (half, n - half)
    xs, ys = [], []
    for label, count in enumerate(counts):
        r = np.sqrt(rng.uniform(0.05, 1.0, count))
        theta = r * turns * 2 * np.pi + label * np.pi
        pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) * 3.0
        xs.append(pts + noise * rng.standard_normal(pts.shape))
        ys.append(np.full(count, label))
    x, y = np.concatenate(xs), np.concatenate(ys)
    order = rng.permutation(n)
    return Dataset(x[order], y[order], split, 2)


def _grid_templates(num_classes: int, size: int, blobs: int, template_seed: int) -> np.ndarray:
    rng = np.random.default_rng(template_seed)
    cells = 3
    centers = [(size * (i + 0.5) / cells, size * (j + 0.5) / cells) for i in range(cells) for j in range(cells)]
    yy, xx = np.mgrid[0:size, 0:size]
    templates = np.zeros((num_classes, size, size))
    used = set()
    for c in range(num_classes):
        while True:
            pick = tuple(sorted(rng.choice(len(centers), size=blobs, replace=False)))
            if pick not in used:
                used.add(pick)
                break
        for p in pick:
            cy, cx = centers[p]
            templates[c] += np.exp(-((yy - cy + 0.5) ** 2 + (xx - cx + 0.5) ** 2) / 2.0)
    return templates


def grid_blobs(n: int, num_classes: int = 6, size: int = 8, noise: float = 0.45, blobs: int = 2,
               jitter: int = 1, seed: int = 0, template_seed: int = 1234, split: str = "train") -> Dataset:
    """Single-channel ``size`` x ``size`` images: each class is a fixed set of
    Gaussian blobs on a 3x3 grid, randomly shifted by up to ``jitter`` pixels,
    rescaled, and buried in Gaussian noise."""
    templates = _grid_templates(num_classes, size, blobs, template_seed)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, n)
    images = templates[labels]
    shifts = rng.integers(-jitter, jitter + 1, size=(n, 2))
    out = np.empty_like(images)
    for k in range(n):
        out[k] = np.roll(images[k], shift=tuple(shifts[k]), axis=(0, 1))
    out *= rng.uniform(0.7, 1.3, size=(n, 1, 1))
    out += noise * rng.standard_normal(out.shape)
    return Dataset(out[:, None, :, :], labels, split, num_classes)


def load_image_dir(path, split: str = "train") -> Dataset:
    """Load ``<path>/<split>.npz`` holding ``images`` (N, C, H, W) and ``labels``."""
    with np.load(Path(path) / f"{split}.npz") as z:
        return Dataset(z["images"].astype(np.float64), z["labels"].astype(np.int64), split)


def make_dataset(spec: dict, split: str, seed: int) -> Dataset:
    """Build a dataset from a config section such as
    ``{"name": "spirals", "n_train": 2000, "n_test": 1000, "noise": 0.2}``."""
    spec = dict(spec)
    name = spec.pop("name")
    n = int(spec.pop(f"n_{split}", spec.pop("n", 1000)))
    spec.pop("n_train", None), spec.pop("n_test", None)
    # test data draws from a different stream than training data
    sample_seed = seed * 2 + (1 if split == "test" else 0)
    if name == "spirals":
        return spirals(n, seed=sample_seed, split=split, **spec)
    if name == "grid_blobs":
        return grid_blobs(n, seed=sample_seed, split=split, **spec)
    if name == "image_dir":
        return load_image_dir(spec["path"], split)
    raise ValueError(f"unknown dataset {name!r}")
