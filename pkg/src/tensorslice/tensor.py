"""Dense tensor primitives: reshape, permute, contraction, unfolding and a
one-sided Jacobi SVD.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Every function here is pure: inputs are never written to.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

__all__ = [
    "TensorFormatError",
    "ShapeMismatchError",
    "SvdConvergenceError",
    "SvdResult",
    "as_tensor",
    "reshape",
    "permute",
    "contract",
    "unfold",
    "fold",
    "matmul",
    "truncated_svd",
    "jacobi_svd",
    "write_tensor",
    "read_tensor",
    "save_tensor",
    "load_tensor",
    "tensor_to_bytes",
    "tensor_from_bytes",
]

MAGIC = b"TSLC"
FORMAT_VERSION = 1


class ShapeMismatchError(ValueError):
    pass


class TensorFormatError(ValueError):
    pass


class SvdConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual off-diagonal {residual:.3e})")
        self.residual = residual


def as_tensor(x) -> np.ndarray:
    t = np.array(x, dtype=np.float64, order="C", copy=None)
    if any(d < 1 for d in t.shape):
        raise ShapeMismatchError(f"tensor extents must be >= 1, got {t.shape}")
    return t


def reshape(t: np.ndarray, new_shape: Sequence[int]) -> np.ndarray:
    new_shape = tuple(int(d) for d in new_shape)
    if new_shape.count(-1) == 1:
        known = int(np.prod([d for d in new_shape if d != -1], dtype=np.int64))
        if known and t.size % known == 0:
            new_shape = tuple(t.size // known if d == -1 else d for d in new_shape)
    if any(d < 0 for d in new_shape) or int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ShapeMismatchError(f"cannot reshape {t.shape} into {new_shape}")
    return np.reshape(t, new_shape, order="C")


def permute(t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(t.ndim)):
        raise ValueError(f"{axes} is not a permutation of 0..{t.ndim - 1}")
    return np.ascontiguousarray(np.transpose(t, axes))


def contract(a: np.ndarray, b: np.ndarray, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over the paired axes; free axes of ``a`` come first, then those of
    ``b``, each in their original order."""
    ax_a = [int(p[0]) for p in pairs]
    ax_b = [int(p[1]) for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ValueError(f"repeated axis in contraction pairs {list(pairs)}")
    for i, j in zip(ax_a, ax_b):
        if not (0 <= i < a.ndim and 0 <= j < b.ndim):
            raise ValueError(f"axis pair ({i}, {j}) out of range for ranks {a.ndim}, {b.ndim}")
        if a.shape[i] != b.shape[j]:
            raise ShapeMismatchError(
                f"extent mismatch on pair ({i}, {j}): {a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``[d_mode, prod(other extents)]``.

    Columns run row-major over the remaining axes in ascending original order.
    """
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} invalid for rank {t.ndim}")
    return np.ascontiguousarray(np.moveaxis(t, mode, 0)).reshape(t.shape[mode], -1)


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} invalid for rank {len(shape)}")
    rest = shape[:mode] + shape[mode + 1:]
    moved = reshape(m, (shape[mode],) + rest)
    return np.ascontiguousarray(np.moveaxis(moved, 0, mode))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    return contract(a, b, [(1, 0)])


# --------------------------------------------------------------------------
# SVD
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    discarded_energy: float

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle method: n-1 rounds of n/2 disjoint pairs (n even)
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        left = players[: n // 2]
        right = players[n // 2:][::-1]
        p = np.array([min(a, b) for a, b in zip(left, right)])
        q = np.array([max(a, b) for a, b in zip(left, right)])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_svd(m: np.ndarray, tol: float = 1e-12, max_sweeps: int | None = None):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``u, s, vt`` with ``s`` sorted non-increasing (stable for ties) and
    ``k = min(m.shape)`` columns. Rotations for disjoint column pairs of a
    round are applied together.
    """
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(f"SVD needs a matrix, got shape {a.shape}")
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T.copy()
    rows, n = a.shape
    if max_sweeps is None:
        max_sweeps = 100 * n

    padded = n + (n % 2)
    work = np.zeros((rows, padded))
    work[:, :n] = a
    v = np.eye(padded)
    rounds = _round_robin(padded) if padded > 1 else []

    off = 0.0
    converged = padded <= 1
    for _ in range(max_sweeps):
        if converged:
            break
        off = 0.0
        for p, q in rounds:
            up, uq = work[:, p], work[:, q]
            alpha = np.einsum("ij,ij->j", up, up)
            beta = np.einsum("ij,ij->j", uq, uq)
            gamma = np.einsum("ij,ij->j", up, uq)
            norm = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(norm > 0, np.abs(gamma) / norm, 0.0)
            if ratio.size:
                off = max(off, float(ratio.max()))
            rot = ratio > tol
            if not rot.any():
                continue
            p, q = p[rot], q[rot]
            alpha, beta, gamma = alpha[rot], beta[rot], gamma[rot]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            up, uq = work[:, p], work[:, q]
            work[:, p] = c * up - s * uq
            work[:, q] = s * up + c * uq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        converged = off <= tol
    if not converged:
        raise SvdConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps", off)

    work, v = work[:, :n], v[:n, :n]
    sv = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-sv, kind="stable")
    sv, work, v = sv[order], work[:, order], v[:, order]

    u = np.zeros((rows, n))
    floor = sv[0] * max(rows, n) * np.finfo(np.float64).eps if n else 0.0
    live = sv > floor
    u[:, live] = work[:, live] / sv[live]
    sv = np.where(live, sv, 0.0)
    if not live.all():
        u = _complete_basis(u, live)

    if transposed:
        return v, sv, u.T
    return u, sv, v.T


def _complete_basis(u: np.ndarray, live: np.ndarray) -> np.ndarray:
    # dead columns (zero singular values) get an orthonormal completion
    rows = u.shape[0]
    basis = [u[:, j] for j in np.flatnonzero(live)]
    out = u.copy()
    candidates = iter(np.eye(rows))
    for j in np.flatnonzero(~live):
        while True:
            vec = next(candidates).copy()
            for _ in range(2):
                for b in basis:
                    vec -= (b @ vec) * b
            nrm = np.linalg.norm(vec)
            if nrm > 1e-8:
                vec /= nrm
                break
        basis.append(vec)
        out[:, j] = vec
    return out


def truncated_svd(m: np.ndarray, k: int) -> SvdResult:
    """Best rank-``k`` factors of a matrix.

    Sign convention: the largest-magnitude entry of each left singular vector
    is non-negative.
    """
    if m.ndim != 2:
        raise ShapeMismatchError(f"truncated_svd needs a matrix, got shape {m.shape}")
    kmax = min(m.shape)
    if not 1 <= k <= kmax:
        raise ValueError(f"rank k={k} outside [1, {kmax}]")
    u, s, vt = jacobi_svd(m)
    discarded = float(np.sum(s[k:] ** 2))
    u, s, vt = u[:, :k].copy(), s[:k].copy(), vt[:k].copy()
    pivot = np.abs(u).argmax(axis=0)
    flip = u[pivot, np.arange(k)] < 0
    u[:, flip] *= -1.0
    vt[flip] *= -1.0
    return SvdResult(u=u, s=s, vt=vt, discarded_energy=discarded)


# --------------------------------------------------------------------------
# binary format: "TSLC" | u32 version | u32 rank | u64[rank] extents | f64 data
# --------------------------------------------------------------------------

def write_tensor(f: BinaryIO, t: np.ndarray) -> None:
    t = np.asarray(t, dtype="<f8")
    f.write(MAGIC)
    f.write(struct.pack("<II", FORMAT_VERSION, t.ndim))
    f.write(struct.pack(f"<{t.ndim}Q", *t.shape))
    f.write(t.tobytes(order="C"))


def read_tensor(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    header = f.read(8)
    if len(header) != 8:
        raise TensorFormatError("truncated header")
    version, rank = struct.unpack("<II", header)
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported tensor format version {version}")
    raw = f.read(8 * rank)
    if len(raw) != 8 * rank:
        raise TensorFormatError("truncated extents")
    shape = struct.unpack(f"<{rank}Q", raw)
    count = int(np.prod(shape, dtype=np.int64))
    payload = f.read(8 * count)
    if len(payload) != 8 * count:
        raise TensorFormatError(f"payload has {len(payload)} bytes, expected {8 * count}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def tensor_to_bytes(t: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, t)
    return buf.getvalue()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(data))


def save_tensor(path, t: np.ndarray) -> None:
    with open(Path(path), "wb") as f:
        write_tensor(f, t)


def load_tensor(path) -> np.ndarray:
    with open(Path(path), "rb") as f:
        return read_tensor(f)
