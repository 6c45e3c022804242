"""MPO (tensor-train operator) and Tucker factorizations of layer weights,
their reconstruction maps, and the compression-rate arithmetic.

Matrix convention for MPOs: ``w`` is laid out ``[in, out]`` so that a linear
map is ``y = x @ w``. Row index ``i`` is the row-major multi-index
``(i_1, ..., i_N)`` and column index ``j`` is ``(j_1, ..., j_N)``. Core ``n``
has shape ``[bond_{n-1}, i_n, j_n, bond_n]`` with unit boundary bonds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from . import autodiff as ad
from .tensor import ShapeMismatchError, _complete_basis, contract, reshape, truncated_svd, unfold

log = logging.getLogger(__name__)


class DecompositionError(ValueError):
    pass


class InfeasibleCompressionError(ValueError):
    pass


def _prod(xs) -> int:
    return int(math.prod(int(x) for x in xs))


def _to_fraction(cr) -> Fraction:
    # exact decimal value of the user-facing rate, so 0.3 means 3/10
    return Fraction(repr(float(cr))) if not isinstance(cr, Fraction) else cr


# --------------------------------------------------------------------------
# MPO
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MpoLayer:
    cores: tuple[np.ndarray, ...]
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "cores", tuple(np.asarray(c, dtype=np.float64) for c in self.cores))
        object.__setattr__(self, "in_dims", tuple(int(d) for d in self.in_dims))
        object.__setattr__(self, "out_dims", tuple(int(d) for d in self.out_dims))
        n = len(self.cores)
        if n == 0 or len(self.in_dims) != n or len(self.out_dims) != n:
            raise DecompositionError(
                f"{n} cores but {len(self.in_dims)} input and {len(self.out_dims)} output dims"
            )
        for k, core in enumerate(self.cores):
            if core.ndim != 4:
                raise DecompositionError(f"core {k} has rank {core.ndim}, expected 4")
            if core.shape[1:3] != (self.in_dims[k], self.out_dims[k]):
                raise DecompositionError(
                    f"core {k} physical extents {core.shape[1:3]} != "
                    f"({self.in_dims[k]}, {self.out_dims[k]})"
                )
            if k and self.cores[k - 1].shape[3] != core.shape[0]:
                raise DecompositionError(f"bond mismatch between cores {k - 1} and {k}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise DecompositionError("boundary bonds must be 1")
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (self.out_features,):
                raise DecompositionError(f"bias shape {b.shape} != ({self.out_features},)")
            object.__setattr__(self, "bias", b)

    @property
    def in_features(self) -> int:
        return _prod(self.in_dims)

    @property
    def out_features(self) -> int:
        return _prod(self.out_dims)

    @property
    def bonds(self) -> tuple[int, ...]:
        return tuple(c.shape[3] for c in self.cores[:-1])

    def __len__(self) -> int:
        return len(self.cores)


def mpo_decompose(
    w: np.ndarray,
    in_dims: Sequence[int],
    out_dims: Sequence[int],
    bonds: Sequence[int],
    bias: np.ndarray | None = None,
) -> MpoLayer:
    """TT-SVD sweep over the interleaved ``(i_n, j_n)`` index pairs.

    Each split keeps ``min(bond_n, rows, cols)`` singular triplets and pushes
    ``diag(s) @ vt`` to the right. Requested bonds above the attainable rank
    are clamped.
    """
    w = np.asarray(w, dtype=np.float64)
    in_dims = tuple(int(d) for d in in_dims)
    out_dims = tuple(int(d) for d in out_dims)
    n = len(in_dims)
    if w.ndim != 2:
        raise ShapeMismatchError(f"weight must be a matrix, got shape {w.shape}")
    if len(out_dims) != n:
        raise DecompositionError(f"{n} input dims but {len(out_dims)} output dims")
    if _prod(in_dims) != w.shape[0] or _prod(out_dims) != w.shape[1]:
        raise DecompositionError(
            f"dims {in_dims}/{out_dims} do not factor a {w.shape[0]}x{w.shape[1]} matrix"
        )
    if len(bonds) != n - 1:
        raise DecompositionError(f"{n} cores need {n - 1} bond dims, got {len(bonds)}")
    if any(int(b) < 1 for b in bonds):
        raise DecompositionError(f"bond dims must be >= 1, got {list(bonds)}")

    t = reshape(w, in_dims + out_dims)
    interleave = [ax for k in range(n) for ax in (k, n + k)]
    rest = np.transpose(t, interleave)

    cores = []
    left = 1
    clamped = []
    for k in range(n - 1):
        mat = reshape(rest, (left * in_dims[k] * out_dims[k], -1))
        rank = min(int(bonds[k]), *mat.shape)
        if rank < int(bonds[k]):
            clamped.append((k, int(bonds[k]), rank))
        svd = truncated_svd(mat, rank)
        cores.append(reshape(svd.u, (left, in_dims[k], out_dims[k], rank)))
        rest = svd.s[:, None] * svd.vt
        left = rank
    cores.append(reshape(rest, (left, in_dims[-1], out_dims[-1], 1)))
    if clamped:
        log.info("bond dims clamped to attainable rank: %s", clamped)
    return MpoLayer(tuple(cores), in_dims, out_dims, bias)


def mpo_to_matrix(m: MpoLayer) -> np.ndarray:
    """Contract all bonds and regroup indices into the ``[in, out]`` matrix."""
    n = len(m)
    acc = m.cores[0]
    for core in m.cores[1:]:
        acc = contract(acc, core, [(acc.ndim - 1, 0)])
    # acc: [1, i1, j1, i2, j2, ..., iN, jN, 1]
    acc = acc.reshape(acc.shape[1:-1])
    order = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    return np.transpose(acc, order).reshape(m.in_features, m.out_features)


def mpo_apply(x, cores, in_dims: Sequence[int], out_dims: Sequence[int], bias=None):
    """Apply an MPO to a ``[batch, in]`` input one core at a time.

    Works on plain arrays or autodiff nodes (see :mod:`.autodiff`).
    """
    batch = ad.value(x).shape[0]
    n_in = _prod(in_dims)
    # state: [batch, finished j indices, remaining i indices, bond]
    state = ad.reshape(x, (batch, 1, n_in, 1))
    done = 1
    for k, core in enumerate(cores):
        left, _, _, right = ad.value(core).shape
        remaining = ad.value(state).shape[2] // in_dims[k]
        state = ad.reshape(state, (batch, done, in_dims[k], remaining, left))
        state = ad.einsum("bjira,aioc->bjorc", state, core)
        done *= out_dims[k]
        state = ad.reshape(state, (batch, done, remaining, right))
    y = ad.reshape(state, (batch, done))
    return y if bias is None else ad.add(y, bias)


def mpo_forward(m: MpoLayer, x: np.ndarray) -> np.ndarray:
    """``x @ mpo_to_matrix(m) + bias`` without materializing the matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.in_features:
        raise ShapeMismatchError(f"input shape {x.shape} incompatible with {m.in_features} features")
    return mpo_apply(x, m.cores, m.in_dims, m.out_dims, m.bias)


# --------------------------------------------------------------------------
# Tucker
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TuckerConv:
    """Tucker-2 form of a ``[s1, s2, s3, s4]`` kernel (out, in, kh, kw).

    Only the two channel modes are factored; spatial modes stay full rank.
    """

    core: np.ndarray
    factor_out: np.ndarray
    factor_in: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        core = np.asarray(self.core, dtype=np.float64)
        fo = np.asarray(self.factor_out, dtype=np.float64)
        fi = np.asarray(self.factor_in, dtype=np.float64)
        if core.ndim != 4 or fo.ndim != 2 or fi.ndim != 2:
            raise DecompositionError("Tucker core must be rank 4 and factors matrices")
        if fo.shape[1] != core.shape[0] or fi.shape[1] != core.shape[1]:
            raise DecompositionError(
                f"factor shapes {fo.shape}, {fi.shape} incompatible with core {core.shape}"
            )
        if fo.shape[1] > fo.shape[0] or fi.shape[1] > fi.shape[0]:
            raise DecompositionError("Tucker ranks exceed channel extents")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factor_out", fo)
        object.__setattr__(self, "factor_in", fi)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (fo.shape[0],):
                raise DecompositionError(f"bias shape {b.shape} != ({fo.shape[0]},)")
            object.__setattr__(self, "bias", b)

    @property
    def ranks(self) -> tuple[int, int]:
        return self.core.shape[0], self.core.shape[1]

    @property
    def kernel_shape(self) -> tuple[int, int, int, int]:
        return (self.factor_out.shape[0], self.factor_in.shape[0]) + self.core.shape[2:]


def hosvd(k: np.ndarray, ranks: Sequence[int]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Truncated HOSVD of an arbitrary-order tensor.

    Returns the core and one factor per mode. Modes whose rank equals the
    extent get an identity factor rather than an SVD basis.
    """
    k = np.asarray(k, dtype=np.float64)
    if len(ranks) != k.ndim:
        raise DecompositionError(f"need {k.ndim} ranks, got {len(ranks)}")
    factors = []
    for mode, r in enumerate(ranks):
        d = k.shape[mode]
        if not 1 <= r <= d:
            raise DecompositionError(f"rank {r} out of range for mode {mode} of extent {d}")
        if r == d and mode >= 2:
            factors.append(np.eye(d))
            continue
        factors.append(_left_basis(unfold(k, mode), r))
    core = k
    for mode, f in enumerate(factors):
        core = np.moveaxis(np.tensordot(core, f, axes=([mode], [0])), -1, mode)
    return core, factors


def _left_basis(mat: np.ndarray, r: int) -> np.ndarray:
    kmax = min(mat.shape)
    if r <= kmax:
        return truncated_svd(mat, r).u
    # more columns requested than the unfolding has: orthonormal completion
    u = np.zeros((mat.shape[0], r))
    u[:, :kmax] = truncated_svd(mat, kmax).u
    live = np.arange(r) < kmax
    return _complete_basis(u, live)


def tucker_from_factors(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.asarray(core, dtype=np.float64)
    for mode, f in enumerate(factors):
        out = np.moveaxis(np.tensordot(out, f, axes=([mode], [1])), -1, mode)
    return out


def tucker_decompose(k: np.ndarray, r1: int, r2: int, bias: np.ndarray | None = None) -> TuckerConv:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 4:
        raise ShapeMismatchError(f"kernel must be rank 4, got shape {k.shape}")
    s1, s2, s3, s4 = k.shape
    if not (1 <= r1 <= s1 and 1 <= r2 <= s2):
        raise DecompositionError(f"ranks ({r1}, {r2}) out of range for channels ({s1}, {s2})")
    core, factors = hosvd(k, (r1, r2, s3, s4))
    return TuckerConv(core=core, factor_out=factors[0], factor_in=factors[1], bias=bias)


def tucker_kernel(core, factor_out, factor_in):
    """Channel-mode products of a Tucker-2 core; accepts autodiff nodes."""
    k = ad.einsum("abhw,oa->obhw", core, factor_out)
    return ad.einsum("obhw,ib->oihw", k, factor_in)


def tucker_to_kernel(t: TuckerConv) -> np.ndarray:
    return tucker_kernel(t.core, t.factor_out, t.factor_in)


# --------------------------------------------------------------------------
# rate arithmetic
# --------------------------------------------------------------------------

def balanced_factor(n: int) -> tuple[int, int]:
    """Factor pair ``a * b == n`` with ``a <= b`` as close as possible."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    a = math.isqrt(n)
    while n % a:
        a -= 1
    return a, n // a


def bond_dim_for_cr(i1: int, j1: int, i2: int, j2: int, cr) -> int:
    """Bond dimension of a 2-site MPO meeting a per-layer compression rate.

    floor((1 - cr) * s1 * s2 / (s1 + s2)) with s_k = i_k * j_k, clamped to
    [1, min(s1, s2)].
    """
    frac = _to_fraction(cr)
    if not 0 < frac < 1:
        raise ValueError(f"compression rate must lie in (0, 1), got {cr}")
    if min(i1, j1, i2, j2) < 1:
        raise ValueError("extents must be >= 1")
    s1, s2 = i1 * j1, i2 * j2
    raw = math.floor((1 - frac) * s1 * s2 / (s1 + s2))
    return max(1, min(raw, s1, s2))


def tucker_param_count(shape: Sequence[int], r1: int, r2: int) -> int:
    s1, s2, s3, s4 = shape
    return r1 * r2 * s3 * s4 + s1 * r1 + s2 * r2


def _ray_band(s1: int, s2: int, r1: int, r2: int) -> bool:
    # |r1/s1 - r2/s2| <= max(1/s1, 1/s2), in integers
    return abs(r1 * s2 - r2 * s1) <= max(s1, s2)


def tucker_ranks_for_cr(shape: Sequence[int], cr) -> tuple[int, int]:
    """Channel ranks whose parameter count fits ``dense * (1 - cr)``.

    Candidates stay near the proportional ray ``r1/s1 == r2/s2`` (within one
    rank step). Among those that fit, pick the largest parameter count, then
    the most balanced pair, then the larger ``r1``. ``cr == 0`` means no
    compression and returns full ranks.
    """
    s1, s2, s3, s4 = (int(d) for d in shape)
    frac = _to_fraction(cr)
    if not 0 <= frac < 1:
        raise ValueError(f"compression rate must lie in [0, 1), got {cr}")
    if frac == 0:
        return s1, s2
    budget = (1 - frac) * s1 * s2 * s3 * s4

    best = None
    best_key = None
    # walk down the ray; for each r1 only r2 values inside the band qualify
    for r1 in range(s1, 0, -1):
        center = r1 * s2 / s1
        width = math.ceil(max(s1, s2) / s1) + 1
        lo = max(1, math.floor(center) - width)
        hi = min(s2, math.ceil(center) + width)
        for r2 in range(lo, hi + 1):
            if not _ray_band(s1, s2, r1, r2):
                continue
            p = tucker_param_count((s1, s2, s3, s4), r1, r2)
            if p > budget:
                continue
            key = (p, -abs(r1 * s2 - r2 * s1), r1)
            if best_key is None or key > best_key:
                best, best_key = (r1, r2), key
    if best is None:
        raise InfeasibleCompressionError(
            f"cr={cr} infeasible for kernel {tuple(shape)}: even ranks (1, 1) need "
            f"{tucker_param_count((s1, s2, s3, s4), 1, 1)} > budget {float(budget):.1f}"
        )
    return best


# --------------------------------------------------------------------------
# plans
# --------------------------------------------------------------------------

Method = Literal["skip", "mpo", "tucker"]


@dataclass(frozen=True)
class PlanEntry:
    layer: int
    method: Method
    in_dims: tuple[int, ...] = ()
    out_dims: tuple[int, ...] = ()
    bonds: tuple[int, ...] = ()
    ranks: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        d: dict = {"layer": self.layer, "method": self.method}
        if self.method == "mpo":
            d["params"] = {
                "in_dims": list(self.in_dims),
                "out_dims": list(self.out_dims),
                "bonds": list(self.bonds),
            }
        elif self.method == "tucker":
            d["params"] = {"ranks": list(self.ranks)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlanEntry":
        method = d["method"]
        if method not in ("skip", "mpo", "tucker"):
            raise ValueError(f"unknown method {method!r} for layer {d.get('layer')}")
        p = d.get("params") or {}
        return cls(
            layer=int(d["layer"]),
            method=method,
            in_dims=tuple(p.get("in_dims", ())),
            out_dims=tuple(p.get("out_dims", ())),
            bonds=tuple(p.get("bonds", ())),
            ranks=tuple(p.get("ranks", ())),
        )


@dataclass(frozen=True)
class CompressionPlan:
    entries: tuple[PlanEntry, ...] = ()
    target_cr: float | None = None

    def __post_init__(self):
        seen = [e.layer for e in self.entries]
        if len(seen) != len(set(seen)):
            raise ValueError(f"duplicate layer entries in plan: {seen}")
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: e.layer)))

    def active(self) -> dict[int, PlanEntry]:
        return {e.layer: e for e in self.entries if e.method != "skip"}

    def restricted(self, start: int, end: int) -> "CompressionPlan":
        return CompressionPlan(tuple(e for e in self.entries if start <= e.layer < end), self.target_cr)

    def to_dict(self) -> dict:
        return {"target_cr": self.target_cr, "layers": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "CompressionPlan":
        return cls(
            entries=tuple(PlanEntry.from_dict(e) for e in d.get("layers", [])),
            target_cr=d.get("target_cr"),
        )

    def dump(self, path) -> None:
        import yaml

        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def load(cls, path) -> "CompressionPlan":
        import yaml

        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f) or {})


def mpo_entry_for_cr(layer: int, n_in: int, n_out: int, cr) -> PlanEntry:
    """2-site MPO entry with balanced factorizations of both widths."""
    i1, i2 = balanced_factor(n_in)
    j1, j2 = balanced_factor(n_out)
    chi = bond_dim_for_cr(i1, j1, i2, j2, cr)
    return PlanEntry(layer, "mpo", in_dims=(i1, i2), out_dims=(j1, j2), bonds=(chi,))


def tucker_entry_for_cr(layer: int, shape: Sequence[int], cr) -> PlanEntry:
    return PlanEntry(layer, "tucker", ranks=tucker_ranks_for_cr(shape, cr))


def param_count(layer) -> int:
    """Stored parameter count of a dense matrix, factorized layer or model layer
    (biases included)."""
    if isinstance(layer, np.ndarray):
        return int(layer.size)
    if isinstance(layer, MpoLayer):
        n = sum(int(c.size) for c in layer.cores)
    elif isinstance(layer, TuckerConv):
        n = int(layer.core.size + layer.factor_out.size + layer.factor_in.size)
    elif hasattr(layer, "param_count"):
        return int(layer.param_count())
    else:
        raise TypeError(f"cannot count parameters of {type(layer).__name__}")
    if layer.bias is not None:
        n += int(layer.bias.size)
    return n
