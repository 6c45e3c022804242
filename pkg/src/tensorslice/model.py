"""Sequential networks built from dense, convolutional and tensorized layers.

Layers are frozen dataclasses. A network never mutates: tensorizing or
healing a slice yields a new :class:`Network` that shares the untouched layer
objects with its parent.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np

from . import autodiff as ad
from .decompose import (
    CompressionPlan,
    MpoLayer,
    PlanEntry,
    TuckerConv,
    mpo_apply,
    mpo_decompose,
    mpo_entry_for_cr,
    mpo_to_matrix,
    tucker_decompose,
    tucker_entry_for_cr,
    tucker_kernel,
    tucker_to_kernel,
)
from .tensor import ShapeMismatchError, TensorFormatError, tensor_from_bytes, tensor_to_bytes

MODEL_FORMAT = "tensorslice-model"
MODEL_VERSION = 1


class ModelFormatError(TensorFormatError):
    pass


class PlanError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------

class Layer:
    kind: ClassVar[str] = ""
    tensorized: ClassVar[bool] = False

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def with_params(self, params: dict[str, np.ndarray]) -> "Layer":
        return self

    def apply(self, x, params=None):
        raise NotImplementedError

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def config(self) -> dict:
        return {}

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params().values())

    def _p(self, params):
        return self.params() if params is None else params


@dataclass(frozen=True, eq=False)
class Dense(Layer):
    """``y = x @ w.T + b`` with ``w`` shaped ``[out, in]``."""

    w: np.ndarray
    b: np.ndarray | None = None
    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(self.w))
        if self.w.ndim != 2:
            raise ShapeMismatchError(f"dense weight must be a matrix, got {self.w.shape}")
        if self.b is not None:
            object.__setattr__(self, "b", _frozen(self.b))
            if self.b.shape != (self.w.shape[0],):
                raise ShapeMismatchError(f"bias {self.b.shape} does not match weight {self.w.shape}")

    def params(self):
        return {"w": self.w} if self.b is None else {"w": self.w, "b": self.b}

    def with_params(self, params):
        return Dense(params["w"], params.get("b"))

    def apply(self, x, params=None):
        p = self._p(params)
        return ad.linear(x, p["w"], p.get("b"))

    def output_shape(self, in_shape):
        if in_shape != (self.w.shape[1],):
            raise ShapeMismatchError(f"dense layer expects ({self.w.shape[1]},), got {in_shape}")
        return (self.w.shape[0],)


@dataclass(frozen=True, eq=False)
class Conv2d(Layer):
    """Cross-correlation with kernel ``[out, in, kh, kw]`` on NCHW input."""

    k: np.ndarray
    b: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    kind: ClassVar[str] = "conv2d"

    def __post_init__(self):
        object.__setattr__(self, "k", _frozen(self.k))
        if self.k.ndim != 4:
            raise ShapeMismatchError(f"conv kernel must be rank 4, got {self.k.shape}")
        if self.b is not None:
            object.__setattr__(self, "b", _frozen(self.b))
            if self.b.shape != (self.k.shape[0],):
                raise ShapeMismatchError(f"bias {self.b.shape} does not match kernel {self.k.shape}")
        _check_conv_hyper(self.stride, self.padding)

    def params(self):
        return {"k": self.k} if self.b is None else {"k": self.k, "b": self.b}

    def with_params(self, params):
        return Conv2d(params["k"], params.get("b"), self.stride, self.padding)

    def apply(self, x, params=None):
        p = self._p(params)
        return ad.conv2d(x, p["k"], p.get("b"), self.stride, self.padding)

    def output_shape(self, in_shape):
        return _conv_shape(in_shape, self.k.shape, self.stride, self.padding)

    def config(self):
        return {"stride": self.stride, "padding": self.padding}


@dataclass(frozen=True, eq=False)
class ReLU(Layer):
    kind: ClassVar[str] = "relu"

    def apply(self, x, params=None):
        return ad.relu(x)


@dataclass(frozen=True, eq=False)
class Flatten(Layer):
    kind: ClassVar[str] = "flatten"

    def apply(self, x, params=None):
        return ad.reshape(x, (ad.value(x).shape[0], -1))

    def output_shape(self, in_shape):
        return (math.prod(in_shape),)


@dataclass(frozen=True, eq=False)
class MpoDense(Layer):
    mpo: MpoLayer
    kind: ClassVar[str] = "mpo_dense"
    tensorized: ClassVar[bool] = True

    def __post_init__(self):
        for c in self.mpo.cores:
            c.flags.writeable = False

    @classmethod
    def from_dense(cls, dense: Dense, in_dims, out_dims, bonds) -> "MpoDense":
        return cls(mpo_decompose(dense.w.T, in_dims, out_dims, bonds, bias=dense.b))

    def params(self):
        p = {f"core{i}": c for i, c in enumerate(self.mpo.cores)}
        if self.mpo.bias is not None:
            p["b"] = self.mpo.bias
        return p

    def with_params(self, params):
        cores = tuple(params[f"core{i}"] for i in range(len(self.mpo)))
        return MpoDense(MpoLayer(cores, self.mpo.in_dims, self.mpo.out_dims, params.get("b")))

    def apply(self, x, params=None):
        p = self._p(params)
        cores = [p[f"core{i}"] for i in range(len(self.mpo))]
        return mpo_apply(x, cores, self.mpo.in_dims, self.mpo.out_dims, p.get("b"))

    def output_shape(self, in_shape):
        if in_shape != (self.mpo.in_features,):
            raise ShapeMismatchError(f"MPO layer expects ({self.mpo.in_features},), got {in_shape}")
        return (self.mpo.out_features,)

    def config(self):
        return {"in_dims": list(self.mpo.in_dims), "out_dims": list(self.mpo.out_dims)}

    def to_dense(self) -> Dense:
        return Dense(mpo_to_matrix(self.mpo).T, self.mpo.bias)


@dataclass(frozen=True, eq=False)
class TuckerConv2d(Layer):
    tucker: TuckerConv
    stride: int = 1
    padding: int = 0
    kind: ClassVar[str] = "tucker_conv2d"
    tensorized: ClassVar[bool] = True

    def __post_init__(self):
        _check_conv_hyper(self.stride, self.padding)
        for a in (self.tucker.core, self.tucker.factor_out, self.tucker.factor_in):
            a.flags.writeable = False

    @classmethod
    def from_conv(cls, conv: Conv2d, r1: int, r2: int) -> "TuckerConv2d":
        return cls(tucker_decompose(conv.k, r1, r2, bias=conv.b), conv.stride, conv.padding)

    def params(self):
        t = self.tucker
        p = {"core": t.core, "factor_out": t.factor_out, "factor_in": t.factor_in}
        if t.bias is not None:
            p["b"] = t.bias
        return p

    def with_params(self, params):
        t = TuckerConv(params["core"], params["factor_out"], params["factor_in"], params.get("b"))
        return TuckerConv2d(t, self.stride, self.padding)

    def apply(self, x, params=None):
        p = self._p(params)
        kernel = tucker_kernel(p["core"], p["factor_out"], p["factor_in"])
        return ad.conv2d(x, kernel, p.get("b"), self.stride, self.padding)

    def output_shape(self, in_shape):
        return _conv_shape(in_shape, self.tucker.kernel_shape, self.stride, self.padding)

    def config(self):
        return {"stride": self.stride, "padding": self.padding}

    def to_conv(self) -> Conv2d:
        return Conv2d(tucker_to_kernel(self.tucker), self.tucker.bias, self.stride, self.padding)


LAYER_KINDS: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Dense, Conv2d, ReLU, Flatten, MpoDense, TuckerConv2d)
}


def _check_conv_hyper(stride, padding):
    if int(stride) < 1 or int(padding) < 0:
        raise ValueError(f"need stride >= 1 and padding >= 0, got {stride}, {padding}")


def _conv_shape(in_shape, kshape, stride, padding):
    if len(in_shape) != 3:
        raise ShapeMismatchError(f"conv layer expects (C, H, W) input, got {in_shape}")
    c, h, w = in_shape
    cout, cin, kh, kw = kshape
    if c != cin:
        raise ShapeMismatchError(f"conv layer expects {cin} channels, got {c}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeMismatchError(f"kernel {kh}x{kw} larger than padded input {h}x{w}")
    return (cout, ad.conv_output_size(h, kh, stride, padding), ad.conv_output_size(w, kw, stride, padding))


# --------------------------------------------------------------------------
# network, slices, data
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, ...]
    shapes: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ShapeMismatchError as e:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {e}") from None
        object.__setattr__(self, "shapes", tuple(shapes))

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params().items()}

    def with_layer_params(self, updates: dict[int, dict[str, np.ndarray]]) -> "Network":
        layers = list(self.layers)
        for i, p in updates.items():
            layers[i] = layers[i].with_params(p)
        return Network(tuple(layers), self.input_shape)


@dataclass(frozen=True)
class Slice:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid slice [{self.start}, {self.end})")

    def __contains__(self, layer_index: int) -> bool:
        return self.start <= layer_index < self.end

    def indices(self) -> range:
        return range(self.start, self.end)


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"
    num_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeMismatchError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )
        if self.num_classes is None:
            n = int(self.labels.max()) + 1 if self.labels.size else 0
            object.__setattr__(self, "num_classes", n)
        elif self.labels.size and (self.labels.max() >= self.num_classes or self.labels.min() < 0):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.split, self.num_classes)


def run_layers(layers: Sequence[Layer], x, params: dict[int, dict] | None = None, offset: int = 0):
    """Apply ``layers`` in order; ``params`` maps layer position to overrides."""
    params = params or {}
    for i, layer in enumerate(layers):
        try:
            x = layer.apply(x, params.get(i))
        except ShapeMismatchError as e:
            raise ShapeMismatchError(f"layer {offset + i} ({layer.kind}): {e}") from None
    return x


def _check_input(shape_expected, x):
    got = tuple(ad.value(x).shape[1:])
    if got != tuple(shape_expected):
        raise ShapeMismatchError(f"input sample shape {got} != expected {tuple(shape_expected)}")


def forward(net: Network, x) -> np.ndarray:
    return forward_range(net, Slice(0, len(net)) if len(net) else None, x)


def forward_range(net: Network, sl: Slice | None, x) -> np.ndarray:
    """Evaluate layers ``[sl.start, sl.end)``; ``None`` or an empty range is the
    identity."""
    x = np.asarray(x, dtype=np.float64)
    if sl is None:
        return x
    if sl.end > len(net):
        raise ValueError(f"slice {sl} exceeds network of {len(net)} layers")
    _check_input(net.shapes[sl.start], x)
    return run_layers(net.layers[sl.start:sl.end], x, offset=sl.start)


def conv2d_forward(k, b, x, stride: int = 1, padding: int = 0) -> np.ndarray:
    return ad.conv2d(np.asarray(x, dtype=np.float64), np.asarray(k, dtype=np.float64),
                     None if b is None else np.asarray(b, dtype=np.float64), stride, padding)


def partition(net: Network, cuts: Sequence[int] = ()) -> list[Slice]:
    bounds = [int(c) for c in cuts]
    if any(not 0 < c < len(net) for c in bounds) or any(a >= b for a, b in zip(bounds, bounds[1:])):
        raise ValueError(f"cuts {list(cuts)} must be strictly increasing inside (0, {len(net)})")
    edges = [0] + bounds + [len(net)]
    return [Slice(a, b) for a, b in zip(edges, edges[1:])]


def uniform_partition(net: Network, per_slice: int) -> list[Slice]:
    if per_slice < 1 or len(net) % per_slice:
        raise ValueError(f"{len(net)} layers cannot be split into slices of {per_slice}")
    return partition(net, list(range(per_slice, len(net), per_slice)))


def block_partition(net: Network) -> list[Slice]:
    """One slice per weighted layer together with its trailing parameter-free
    layers, so cuts fall after activations."""
    cuts = [i for i in range(1, len(net)) if net.layers[i].params()]
    return partition(net, cuts)


# --------------------------------------------------------------------------
# tensorization
# --------------------------------------------------------------------------

def tensorize_layer(layer: Layer, entry: PlanEntry) -> Layer:
    if entry.method == "skip":
        return layer
    if entry.method == "mpo":
        if not isinstance(layer, Dense):
            raise PlanError(f"layer {entry.layer}: mpo needs a dense layer, found {layer.kind}")
        return MpoDense.from_dense(layer, entry.in_dims, entry.out_dims, entry.bonds)
    if entry.method == "tucker":
        if not isinstance(layer, Conv2d):
            raise PlanError(f"layer {entry.layer}: tucker needs a conv layer, found {layer.kind}")
        r1, r2 = entry.ranks
        return TuckerConv2d.from_conv(layer, r1, r2)
    raise PlanError(f"unknown method {entry.method!r}")


def validate_plan(net: Network, plan: CompressionPlan) -> None:
    problems = []
    for e in plan.entries:
        if not 0 <= e.layer < len(net):
            problems.append(f"layer {e.layer} does not exist")
            continue
        kind = net.layers[e.layer].kind
        if e.method == "mpo" and kind != "dense":
            problems.append(f"layer {e.layer}: mpo needs dense, found {kind}")
        if e.method == "tucker" and kind != "conv2d":
            problems.append(f"layer {e.layer}: tucker needs conv2d, found {kind}")
    if problems:
        raise PlanError("; ".join(problems))


def tensorize_slice(net: Network, sl: Slice, plan: CompressionPlan) -> Network:
    """Decompose the planned layers inside ``sl``; everything else is shared."""
    validate_plan(net, plan)
    layers = list(net.layers)
    for idx, entry in plan.active().items():
        if idx in sl:
            layers[idx] = tensorize_layer(net.layers[idx], entry)
    return Network(tuple(layers), net.input_shape)


def tensorize(net: Network, plan: CompressionPlan) -> Network:
    return tensorize_slice(net, Slice(0, len(net)), plan)


def replace_slice(net: Network, sl: Slice, layers: Sequence[Layer]) -> Network:
    if sl.end > len(net):
        raise ValueError(f"slice {sl} exceeds network of {len(net)} layers")
    new = net.layers[:sl.start] + tuple(layers) + net.layers[sl.end:]
    return Network(new, net.input_shape)


def compression_rate(original: Network, compressed: Network) -> float:
    p0, p1 = original.param_count(), compressed.param_count()
    return (p0 - p1) / p0


def plan_uniform(net: Network, layer_cr: float, layers: Sequence[int] | None = None,
                 exclude: Sequence[int] = ()) -> CompressionPlan:
    """Same per-layer rate for every dense/conv layer (or the listed ones)."""
    candidates = [i for i, l in enumerate(net.layers) if l.kind in ("dense", "conv2d")]
    if layers is not None:
        candidates = [i for i in candidates if i in set(layers)]
    entries = []
    for i in candidates:
        if i in set(exclude):
            entries.append(PlanEntry(i, "skip"))
            continue
        layer = net.layers[i]
        if isinstance(layer, Dense):
            out_f, in_f = layer.w.shape
            entries.append(mpo_entry_for_cr(i, in_f, out_f, layer_cr))
        else:
            entries.append(tucker_entry_for_cr(i, layer.k.shape, layer_cr))
    return CompressionPlan(tuple(entries), target_cr=layer_cr)


def plan_for_target(net: Network, target_cr: float, layers: Sequence[int] | None = None,
                    exclude: Sequence[int] = (), step: float = 0.005) -> CompressionPlan:
    """Smallest uniform per-layer rate (on a ``step`` grid) whose whole-model
    rate reaches ``target_cr``."""
    from .decompose import InfeasibleCompressionError

    k = max(1, math.ceil(target_cr / step))
    best = None
    while k * step < 1:
        layer_cr = round(k * step, 10)
        try:
            plan = plan_uniform(net, layer_cr, layers, exclude)
        except InfeasibleCompressionError:
            break
        if compression_rate(net, tensorize(net, plan)) >= target_cr:
            best = plan
            break
        k += 1
    if best is None:
        raise PlanError(f"whole-model rate {target_cr} unreachable with the selected layers")
    return CompressionPlan(best.entries, target_cr=target_cr)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def evaluate(net: Network, data: Dataset, batch_size: int = 1024) -> dict:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = np.concatenate([forward(net, data.inputs[i:i + batch_size])
                             for i in range(0, len(data), batch_size)])
    pred = logits.argmax(axis=1)
    logp = ad.log_softmax(logits)
    out = {
        "accuracy": float(np.mean(pred == data.labels)),
        "mean_loss": float(-logp[np.arange(len(data)), data.labels].mean()),
    }
    if logits.shape[1] >= 5:
        top5 = np.argsort(-logits, axis=1, kind="stable")[:, :5]
        out["top5"] = float(np.mean((top5 == data.labels[:, None]).any(axis=1)))
    return out


# --------------------------------------------------------------------------
# persistence: zip container, manifest.json + params/<layer>/<name>.bin
# --------------------------------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def to_bytes(net: Network) -> bytes:
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_shape": list(net.input_shape),
        "layers": [],
    }
    blobs = []
    for i, layer in enumerate(net.layers):
        params = layer.params()
        manifest["layers"].append({"kind": layer.kind, "config": layer.config(), "params": sorted(params)})
        for name in sorted(params):
            blobs.append((f"params/{i}/{name}.bin", tensor_to_bytes(params[name])))
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        _zip_write(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
        for name, data in blobs:
            _zip_write(zf, name, data)
    return buf.getvalue()


def from_bytes(data: bytes) -> Network:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as e:
        raise ModelFormatError(f"not a model container: {e}") from None
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise ModelFormatError("model container has no manifest.json") from None
        if manifest.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"unexpected format tag {manifest.get('format')!r}")
        if manifest.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"model format version {manifest.get('version')} unsupported (expected {MODEL_VERSION})"
            )
        layers = []
        for i, spec in enumerate(manifest["layers"]):
            try:
                params = {n: tensor_from_bytes(zf.read(f"params/{i}/{n}.bin")) for n in spec["params"]}
            except TensorFormatError as e:
                raise ModelFormatError(f"layer {i}: {e}") from None
            layers.append(_build_layer(spec["kind"], spec.get("config", {}), params))
    return Network(tuple(layers), tuple(manifest["input_shape"]))


def _build_layer(kind: str, cfg: dict, p: dict) -> Layer:
    if kind == "dense":
        return Dense(p["w"], p.get("b"))
    if kind == "conv2d":
        return Conv2d(p["k"], p.get("b"), cfg["stride"], cfg["padding"])
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    if kind == "mpo_dense":
        n = len(cfg["in_dims"])
        return MpoDense(MpoLayer(tuple(p[f"core{i}"] for i in range(n)), cfg["in_dims"], cfg["out_dims"], p.get("b")))
    if kind == "tucker_conv2d":
        t = TuckerConv(p["core"], p["factor_out"], p["factor_in"], p.get("b"))
        return TuckerConv2d(t, cfg["stride"], cfg["padding"])
    raise ModelFormatError(f"unknown layer kind {kind!r}")


def save(net: Network, path) -> None:
    Path(path).write_bytes(to_bytes(net))


def load(path) -> Network:
    return from_bytes(Path(path).read_bytes())


def model_checksum(net: Network) -> str:
    return hashlib.sha256(to_bytes(net)).hexdigest()


def same_params(a: Network, b: Network) -> bool:
    """Bit-exact equality of architecture and every parameter."""
    if len(a) != len(b) or a.input_shape != b.input_shape:
        return False
    for la, lb in zip(a.layers, b.layers):
        if la.kind != lb.kind or la.config() != lb.config():
            return False
        pa, pb = la.params(), lb.params()
        if pa.keys() != pb.keys():
            return False
        if any(pa[k].shape != pb[k].shape or pa[k].tobytes() != pb[k].tobytes() for k in pa):
            return False
    return True


# --------------------------------------------------------------------------
# builders for the toy architectures
# --------------------------------------------------------------------------

def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


def make_mlp(sizes: Sequence[int], seed: int = 0) -> Network:
    """ReLU MLP; ``sizes`` lists widths from input to logits."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for k, (a, b) in enumerate(zip(sizes, sizes[1:])):
        layers.append(Dense(_he(rng, (b, a), a), np.zeros(b)))
        if k < len(sizes) - 2:
            layers.append(ReLU())
    return Network(tuple(layers), (sizes[0],))


def make_cnn(in_channels: int, image_size: int, channels: Sequence[int], strides: Sequence[int],
             num_classes: int, seed: int = 0) -> Network:
    """3x3 conv stack (padding 1) with ReLUs, then flatten and a dense head."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    c, size = in_channels, image_size
    for cout, stride in zip(channels, strides):
        layers.append(Conv2d(_he(rng, (cout, c, 3, 3), c * 9), np.zeros(cout), stride, 1))
        layers.append(ReLU())
        c, size = cout, ad.conv_output_size(size, 3, stride, 1)
    layers.append(Flatten())
    layers.append(Dense(_he(rng, (num_classes, c * size * size), c * size * size), np.zeros(num_classes)))
    return Network(tuple(layers), (in_channels, image_size, image_size))


__all__ = [
    "Layer", "Dense", "Conv2d", "ReLU", "Flatten", "MpoDense", "TuckerConv2d", "LAYER_KINDS",
    "Network", "Slice", "Dataset", "ModelFormatError", "PlanError",
    "forward", "forward_range", "run_layers", "conv2d_forward", "partition", "uniform_partition",
    "block_partition", "tensorize_layer", "tensorize_slice", "tensorize", "validate_plan",
    "replace_slice", "compression_rate", "plan_uniform", "plan_for_target", "evaluate",
    "save", "load", "to_bytes", "from_bytes", "model_checksum", "same_params", "make_mlp", "make_cnn",
]
