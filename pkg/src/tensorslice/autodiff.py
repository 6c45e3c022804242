"""Small reverse-mode autodiff over numpy arrays.

Only the operations the layers and losses need are provided. Each op accepts
plain arrays or :class:`Var` nodes; when no argument is a ``Var`` the op
returns a plain array and records nothing, so inference and training share
one code path.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeMismatchError


class Var:
    __slots__ = ("value", "grad", "parents", "name")

    def __init__(self, value, parents: Sequence[tuple["Var", Callable]] = (), name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _node(out, *links) -> Var | np.ndarray:
    """Wrap ``out`` in a Var if any parent is a Var; ``links`` are (x, vjp)."""
    parents = [(x, fn) for x, fn in links if isinstance(x, Var)]
    if not parents:
        return out
    return Var(out, parents)


def _toposort(root: Var) -> list[Var]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(out: Var, grad: np.ndarray | None = None) -> None:
    """Accumulate d(out)/d(node) into ``.grad`` of every upstream node."""
    if not isinstance(out, Var):
        raise TypeError("backward needs a Var produced by a recorded computation")
    if grad is None:
        if out.value.size != 1:
            raise ShapeMismatchError("output gradient required for non-scalar outputs")
        grad = np.ones_like(out.value)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != out.value.shape:
        raise ShapeMismatchError(f"output grad shape {grad.shape} != output shape {out.value.shape}")
    order = _toposort(out)
    for node in order:
        node.grad = None
    out.grad = grad
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g


def grad(loss: Var, params: dict[str, Var]) -> dict[str, np.ndarray]:
    backward(loss)
    return {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in params.items()}


# --------------------------------------------------------------------------
# elementwise / shape ops
# --------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, d in enumerate(shape):
        if d == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    va, vb = value(a), value(b)
    return _node(va + vb, (a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: _unbroadcast(g, vb.shape)))


def sub(a, b):
    va, vb = value(a), value(b)
    return _node(va - vb, (a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: -_unbroadcast(g, vb.shape)))


def mul(a, b):
    va, vb = value(a), value(b)
    return _node(
        va * vb,
        (a, lambda g: _unbroadcast(g * vb, va.shape)),
        (b, lambda g: _unbroadcast(g * va, vb.shape)),
    )


def reshape(x, shape):
    vx = value(x)
    old = vx.shape
    return _node(vx.reshape(shape), (x, lambda g: g.reshape(old)))


def transpose(x, axes: Sequence[int]):
    vx = value(x)
    inv = np.argsort(axes)
    return _node(np.transpose(vx, axes), (x, lambda g: np.transpose(g, inv)))


def relu(x):
    vx = value(x)
    mask = vx > 0
    return _node(np.where(mask, vx, 0.0), (x, lambda g: g * mask))


def total(x):
    vx = value(x)
    return _node(np.asarray(vx.sum()), (x, lambda g: np.broadcast_to(g, vx.shape).copy()))


# --------------------------------------------------------------------------
# contraction
# --------------------------------------------------------------------------

def einsum(spec: str, a, b):
    """Two-operand einsum without traces or one-sided summation.

    The adjoint of a contraction is again a contraction, so the backward pass
    is two more einsums.
    """
    lhs, out = spec.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s in (sa, sb, out):
        if len(set(s)) != len(s):
            raise ValueError(f"repeated index within one operand of {spec!r}")
    if not set(sa) <= set(sb) | set(out) or not set(sb) <= set(sa) | set(out):
        raise ValueError(f"one-sided summation not supported in {spec!r}")
    va, vb = value(a), value(b)
    res = np.einsum(spec, va, vb, optimize=True)
    return _node(
        res,
        (a, lambda g: np.einsum(f"{out},{sb}->{sa}", g, vb, optimize=True)),
        (b, lambda g: np.einsum(f"{out},{sa}->{sb}", g, va, optimize=True)),
    )


def linear(x, w, b=None):
    """``x @ w.T + b`` for a ``[out, in]`` weight."""
    vx, vw = value(x), value(w)
    y = _node(vx @ vw.T, (x, lambda g: g @ vw), (w, lambda g: g.T @ vx))
    return y if b is None else add(y, b)


# --------------------------------------------------------------------------
# convolution (cross-correlation, NCHW, zero padding)
# --------------------------------------------------------------------------

def conv_output_size(h: int, k: int, stride: int, padding: int) -> int:
    return (h + 2 * padding - k) // stride + 1


def conv2d(x, k, b=None, stride: int = 1, padding: int = 0):
    vx, vk = value(x), value(k)
    if vx.ndim != 4 or vk.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects NCHW input and 4D kernel, got {vx.shape}, {vk.shape}")
    batch, cin, h, w = vx.shape
    cout, kin, kh, kw = vk.shape
    if kin != cin:
        raise ShapeMismatchError(f"kernel expects {kin} input channels, input has {cin}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeMismatchError(f"kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})")
    xp = np.pad(vx, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else vx
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # win: [batch, cin, ho, wo, kh, kw]
    out = np.tensordot(win, vk, axes=([1, 4, 5], [1, 2, 3]))  # [batch, ho, wo, cout]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def grad_k(g):
        return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # [cout, cin, kh, kw]

    def grad_x(g):
        gp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, vk[:, :, i, j], axes=([1], [0]))  # [b, ho, wo, cin]
                gp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib.transpose(0, 3, 1, 2)
        if padding:
            gp = gp[:, :, padding:padding + h, padding:padding + w]
        return gp

    y = _node(out, (x, grad_x), (k, grad_k))
    if b is None:
        return y
    return add(y, reshape(b, (1, -1, 1, 1)))


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def mse_loss(pred, target):
    """Squared Frobenius distance divided by the batch size."""
    vp, vt = value(pred), value(target)
    if vp.shape != vt.shape:
        raise ShapeMismatchError(f"mse_loss shapes differ: {vp.shape} vs {vt.shape}")
    batch = vp.shape[0] if vp.ndim else 1
    diff = vp - vt
    return _node(
        np.asarray(np.sum(diff * diff) / batch),
        (pred, lambda g: g * 2.0 * diff / batch),
        (target, lambda g: -g * 2.0 * diff / batch),
    )


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(logits, labels):
    vl = value(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if vl.ndim != 2 or labels.shape != (vl.shape[0],):
        raise ShapeMismatchError(f"logits {vl.shape} incompatible with labels {labels.shape}")
    batch = vl.shape[0]
    logp = log_softmax(vl)
    loss = -logp[np.arange(batch), labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(batch), labels] -= 1.0
        return g * p / batch

    return _node(np.asarray(loss), (logits, vjp))


# --------------------------------------------------------------------------
# finite differences (test oracle)
# --------------------------------------------------------------------------

def finite_diff_grad(f: Callable[[dict[str, np.ndarray]], float], params: dict[str, np.ndarray],
                     h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central-difference gradient of scalar ``f`` w.r.t. every coordinate."""
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    out = {}
    for name in sorted(work):
        arr = work[name]
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(work))
            flat[i] = orig - h
            fm = float(f(work))
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def leaves(params: dict[str, np.ndarray], names: Iterable[str] | None = None) -> dict[str, Var]:
    names = params.keys() if names is None else names
    return {k: Var(params[k], name=k) for k in names}
