"""Single-layer sensitivity probe: tensorize one layer at a time without any
healing and record how much test accuracy drops."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Literal, Sequence

from .decompose import CompressionPlan, PlanEntry, balanced_factor
from .model import Conv2d, Dataset, Dense, Network, PlanError, evaluate, tensorize


@dataclass(frozen=True)
class SensitivityRecord:
    layer: int
    shape: tuple[int, ...]
    ranks: tuple[int, ...]
    accuracy: float
    delta: float


def probe_entry(net: Network, index: int, probe: Literal["half", "full"] = "half") -> PlanEntry:
    """Plan entry for the probe of one layer.

    Convolutions keep ``ceil(out/2)`` and ``ceil(in/2)`` channel ranks; dense
    layers become a balanced 2-site MPO whose bond is half the largest
    possible one. ``probe="full"`` keeps every rank (an exact rewrite).
    """
    layer = net.layers[index]
    if isinstance(layer, Conv2d):
        out_c, in_c = layer.k.shape[:2]
        if probe == "full":
            return PlanEntry(index, "tucker", ranks=(out_c, in_c))
        return PlanEntry(index, "tucker", ranks=(math.ceil(out_c / 2), math.ceil(in_c / 2)))
    if isinstance(layer, Dense):
        n_out, n_in = layer.w.shape
        i1, i2 = balanced_factor(n_in)
        j1, j2 = balanced_factor(n_out)
        max_chi = min(i1 * j1, i2 * j2)
        chi = max_chi if probe == "full" else math.ceil(max_chi / 2)
        return PlanEntry(index, "mpo", in_dims=(i1, i2), out_dims=(j1, j2), bonds=(chi,))
    raise PlanError(f"layer {index} ({layer.kind}) cannot be tensorized")


def layer_sensitivity(net: Network, data: Dataset, candidate_layers: Sequence[int],
                      probe: Literal["half", "full"] = "half",
                      baseline: float | None = None) -> list[SensitivityRecord]:
    """Probe each candidate on its own and return records sorted by accuracy
    delta, most harmful first. ``net`` itself is never modified."""
    if probe not in ("half", "full"):
        raise ValueError(f"probe must be 'half' or 'full', got {probe!r}")
    base = evaluate(net, data)["accuracy"] if baseline is None else baseline
    records = []
    for idx in candidate_layers:
        entry = probe_entry(net, idx, probe)
        try:
            acc = evaluate(tensorize(net, CompressionPlan((entry,))), data)["accuracy"]
        except Exception as e:
            raise RuntimeError(f"sensitivity probe failed at layer {idx}: {e}") from e
        layer = net.layers[idx]
        shape = tuple(layer.w.shape if isinstance(layer, Dense) else layer.k.shape)
        ranks = entry.ranks if entry.method == "tucker" else entry.bonds
        records.append(SensitivityRecord(idx, shape, tuple(ranks), acc, acc - base))
    return sorted(records, key=lambda r: (r.delta, r.layer))


def select_exclusions(records: Sequence[SensitivityRecord], k: int) -> set[int]:
    """Indices of the ``k`` layers with the most negative delta."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    ranked = sorted(records, key=lambda r: (r.delta, r.layer))
    return {r.layer for r in ranked[:k]}


def sensitivity_csv(records: Sequence[SensitivityRecord], path=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["layer", "shape", "ranks", "accuracy", "delta"], lineterminator="\n")
    w.writeheader()
    for r in records:
        row = asdict(r)
        row["shape"] = "x".join(map(str, r.shape))
        row["ranks"] = "x".join(map(str, r.ranks))
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text
