"""Network intermediate representation: layers, shape tracing, evaluation,
and subnetwork splitting.

Signals are channels-last numpy arrays: (N1, N2, c) for 2-D interfaces,
(N, c) for 1-D, (c,) for plain vectors.  Flattening is row-major, so the
flattened index is position-major / channel-fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, SplitError

ACTIVATIONS = ("relu", "tanh", "sigmoid")   # all slope-restricted to [0, 1]
PADDINGS = ("full", "same", "valid")


@dataclass(frozen=True)
class Interface:
    """Shape of the signal between two layers."""

    signal_dims: int              # d in {0, 1, 2}
    channels: int                 # c
    support: tuple[int, ...] = () # (N1[, N2]), empty iff d = 0

    def __post_init__(self):
        if self.signal_dims not in (0, 1, 2):
            raise ModelError(f"signal dimension must be 0, 1 or 2, got {self.signal_dims}")
        if len(self.support) != self.signal_dims:
            raise ModelError(f"support {self.support} does not match signal dimension {self.signal_dims}")
        if self.channels < 1 or any(n < 1 for n in self.support):
            raise ModelError(f"empty interface: channels={self.channels}, support={self.support}")

    @property
    def positions(self) -> int:
        return int(np.prod(self.support)) if self.signal_dims else 1

    @property
    def total_dim(self) -> int:
        return self.positions * self.channels

    def array_shape(self) -> tuple[int, ...]:
        return self.support + (self.channels,) if self.signal_dims else (self.channels,)


# ---------------------------------------------------------------------------
# layers


@dataclass
class FullyConnected:
    weight: np.ndarray            # c x c_minus
    bias: np.ndarray              # c

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape[0] != self.weight.shape[0]:
            raise ModelError(f"dense layer shapes inconsistent: W {self.weight.shape}, b {self.bias.shape}")


@dataclass
class Conv1D:
    kernel: np.ndarray            # (r+1, c, c_minus)
    bias: np.ndarray              # c
    stride: tuple[int, ...] = (1,)
    padding: str = "full"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        self.stride = tuple(int(s) for s in self.stride)
        if self.kernel.ndim != 3:
            raise ModelError(f"1-D kernel must be (r+1, c, c-), got {self.kernel.shape}")
        if len(self.stride) != 1 or self.stride[0] < 1:
            raise ModelError(f"bad 1-D stride {self.stride}")
        if self.padding not in PADDINGS:
            raise ModelError(f"unknown padding mode {self.padding!r}")
        if self.bias.shape[0] != self.kernel.shape[1]:
            raise ModelError("conv bias length does not match output channels")

    @property
    def extent(self) -> tuple[int, ...]:
        return (self.kernel.shape[0] - 1,)


@dataclass
class Conv2D:
    kernel: np.ndarray            # (r1+1, r2+1, c, c_minus)
    bias: np.ndarray
    stride: tuple[int, ...] = (1, 1)
    padding: str = "full"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        self.stride = tuple(int(s) for s in self.stride)
        if self.kernel.ndim != 4:
            raise ModelError(f"2-D kernel must be (r1+1, r2+1, c, c-), got {self.kernel.shape}")
        if len(self.stride) != 2 or min(self.stride) < 1:
            raise ModelError(f"bad 2-D stride {self.stride}")
        if self.padding not in PADDINGS:
            raise ModelError(f"unknown padding mode {self.padding!r}")
        if self.bias.shape[0] != self.kernel.shape[2]:
            raise ModelError("conv bias length does not match output channels")

    @property
    def extent(self) -> tuple[int, ...]:
        return (self.kernel.shape[0] - 1, self.kernel.shape[1] - 1)


@dataclass
class StateSpace:
    """Causal 1-D state-space layer x[i+1] = Ax + Bu, y = Cx + Du + g, x[0] = 0."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        self.g = np.asarray(self.g, dtype=np.float64).reshape(-1)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise ModelError("state-space matrix dimensions inconsistent")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]) or self.g.shape[0] != self.D.shape[0]:
            raise ModelError("state-space matrix dimensions inconsistent")


@dataclass
class Activation:
    fn: str = "relu"

    def __post_init__(self):
        if self.fn not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.fn!r}; supported: {ACTIVATIONS}")


@dataclass
class GroupSort:
    group_size: int

    def __post_init__(self):
        if self.group_size < 1:
            raise ModelError(f"group size must be positive, got {self.group_size}")


@dataclass
class AvgPool:
    extent: tuple[int, ...]       # window size minus one, per signal dim
    stride: tuple[int, ...]

    def __post_init__(self):
        self.extent = tuple(int(r) for r in self.extent)
        self.stride = tuple(int(s) for s in self.stride)
        if len(self.extent) != len(self.stride) or any(r < 0 for r in self.extent) \
                or any(s < 1 for s in self.stride):
            raise ModelError(f"bad pooling geometry: extent {self.extent}, stride {self.stride}")


@dataclass
class MaxPool(AvgPool):
    pass


@dataclass
class Flatten:
    # filled in by trace_shapes so downstream consumers can read the support
    support: tuple[int, ...] = ()


@dataclass
class Residual:
    """y = u + inner(u) on a vector interface; inner must map c -> c."""

    inner: "Network"


Layer = (FullyConnected, Conv1D, Conv2D, StateSpace, Activation, GroupSort,
         AvgPool, MaxPool, Flatten, Residual)
LinearLayer = (FullyConnected, Conv1D, Conv2D, StateSpace)


@dataclass
class Network:
    input: Interface
    layers: list

    def __post_init__(self):
        for k, layer in enumerate(self.layers):
            if not isinstance(layer, Layer):
                raise ModelError(f"layer {k}: unsupported object {type(layer).__name__}")


# ---------------------------------------------------------------------------
# shape tracing


def conv_out_length(n: int, r: int, s: int, padding: str) -> tuple[int, int]:
    """Traced output length and evaluation anchor for one axis.

    The layer computes y[j] = sum_t K[t] u[s j + anchor - t] with u zero off
    support.  full keeps every index with any overlap, valid only windows
    inside the support, same targets ceil(n / s) outputs with the surplus
    split evenly (extra zero on the right for odd totals).
    """
    if padding == "full":
        out = (n + r - 1) // s + 1
        anchor = 0
    elif padding == "valid":
        out = (n - r - 1) // s + 1
        anchor = r
    else:  # same
        out = -(-n // s)
        pad_total = max((out - 1) * s + r + 1 - n, 0)
        anchor = r - pad_total // 2
    if out < 1:
        raise ModelError(f"support {n} too small for kernel extent {r} with {padding} padding")
    return out, anchor


def pool_out_length(n: int, r: int, s: int) -> int:
    out = (n - r - 1) // s + 1
    if out < 1:
        raise ModelError(f"support {n} too small for pooling window {r + 1}")
    return out


def _trace_layer(shape: Interface, layer, k: int) -> Interface:
    d, c = shape.signal_dims, shape.channels
    if isinstance(layer, FullyConnected):
        if d != 0:
            raise ModelError(f"layer {k}: dense layer needs a vector interface, got d={d}")
        if layer.weight.shape[1] != c:
            raise ModelError(f"layer {k}: dense layer expects {layer.weight.shape[1]} channels, got {c}")
        return Interface(0, layer.weight.shape[0])
    if isinstance(layer, (Conv1D, Conv2D)):
        want = 1 if isinstance(layer, Conv1D) else 2
        if d != want:
            raise ModelError(f"layer {k}: {want}-D convolution on a d={d} interface")
        if layer.kernel.shape[-1] != c:
            raise ModelError(f"layer {k}: kernel expects {layer.kernel.shape[-1]} channels, got {c}")
        try:
            out = tuple(conv_out_length(n, r, s, layer.padding)[0]
                        for n, r, s in zip(shape.support, layer.extent, layer.stride))
        except ModelError as e:
            raise ModelError(f"layer {k}: {e}") from None
        return Interface(d, layer.kernel.shape[-2], out)
    if isinstance(layer, StateSpace):
        if d != 1:
            raise ModelError(f"layer {k}: state-space layer needs a 1-D interface, got d={d}")
        if layer.B.shape[1] != c:
            raise ModelError(f"layer {k}: state-space layer expects {layer.B.shape[1]} channels, got {c}")
        return Interface(1, layer.C.shape[0], shape.support)
    if isinstance(layer, Activation):
        return shape
    if isinstance(layer, GroupSort):
        if c % layer.group_size:
            raise ModelError(f"layer {k}: group size does not divide channels ({layer.group_size} vs {c})")
        return shape
    if isinstance(layer, (AvgPool, MaxPool)):
        if d == 0 or len(layer.extent) != d:
            raise ModelError(f"layer {k}: {len(layer.extent)}-D pooling on a d={d} interface")
        try:
            out = tuple(pool_out_length(n, r, s)
                        for n, r, s in zip(shape.support, layer.extent, layer.stride))
        except ModelError as e:
            raise ModelError(f"layer {k}: {e}") from None
        return Interface(d, c, out)
    if isinstance(layer, Flatten):
        if d == 0:
            raise ModelError(f"layer {k}: flatten applied at d = 0")
        layer.support = shape.support
        return Interface(0, shape.total_dim)
    if isinstance(layer, Residual):
        if d != 0:
            raise ModelError(f"layer {k}: residual layers are supported on vector interfaces only "
                             f"(convolutional residual paths are not implemented)")
        if layer.inner.input != shape:
            raise ModelError(f"layer {k}: residual inner network expects {layer.inner.input}, got {shape}")
        inner_out = trace_shapes(layer.inner)[-1]
        if inner_out != shape:
            raise ModelError(f"layer {k}: residual inner network must preserve the interface, "
                             f"maps {shape} to {inner_out}")
        return shape
    raise ModelError(f"layer {k}: unsupported layer {type(layer).__name__}")


def trace_shapes(net: Network) -> list[Interface]:
    """Interfaces between layers, length len(layers) + 1."""
    if not net.layers:
        raise ModelError("empty network")
    shapes = [net.input]
    for k, layer in enumerate(net.layers):
        shapes.append(_trace_layer(shapes[-1], layer, k))
    for k, layer in enumerate(net.layers[:-1]):
        if isinstance(layer, Flatten):
            rest = shapes[k + 2:]
            if any(s.signal_dims for s in rest):
                raise ModelError(f"layer {k}: signal-valued layers appear after flatten")
    return shapes


# ---------------------------------------------------------------------------
# evaluation


def _conv_eval(kernel, bias, u, stride, anchors, out_shape):
    """y[j] = b + sum_t K[t] u[s j + a - t], u zero-extended, channels last."""
    d = u.ndim - 1
    extent = tuple(kernel.shape[i] - 1 for i in range(d))
    pad_left = tuple(extent[i] - anchors[i] for i in range(d))
    need = tuple(stride[i] * (out_shape[i] - 1) + extent[i] + 1 for i in range(d))
    pad = [(pad_left[i], max(0, need[i] - u.shape[i] - pad_left[i])) for i in range(d)] + [(0, 0)]
    w = np.pad(u, pad)
    c_out = kernel.shape[d]
    y = np.zeros(out_shape + (c_out,))
    # after left-padding by r - a every tap reads w[s j + r - t]
    for t in np.ndindex(*(e + 1 for e in extent)):
        sl = tuple(slice(extent[i] - t[i], extent[i] - t[i] + stride[i] * out_shape[i], stride[i])
                   for i in range(d))
        y += np.einsum("oc,...c->...o", kernel[t], w[sl])
    return y + bias


def _pool_windows(u, extent, stride, reduce_max):
    d = u.ndim - 1
    out = tuple(pool_out_length(u.shape[i], extent[i], stride[i]) for i in range(d))
    acc = None
    for t in np.ndindex(*(e + 1 for e in extent)):
        sl = tuple(slice(t[i], t[i] + stride[i] * out[i], stride[i]) for i in range(d))
        piece = u[sl]
        if acc is None:
            acc = piece.copy()
        elif reduce_max:
            np.maximum(acc, piece, out=acc)
        else:
            acc += piece
    if not reduce_max:
        acc /= np.prod([e + 1 for e in extent])
    return acc


def _apply_layer(layer, u, shape: Interface):
    if isinstance(layer, FullyConnected):
        return layer.weight @ u + layer.bias
    if isinstance(layer, (Conv1D, Conv2D)):
        d = 1 if isinstance(layer, Conv1D) else 2
        out, anchors = zip(*(conv_out_length(n, r, s, layer.padding)
                             for n, r, s in zip(shape.support, layer.extent, layer.stride)))
        return _conv_eval(layer.kernel, layer.bias, u, layer.stride, anchors, tuple(out))
    if isinstance(layer, StateSpace):
        n = layer.A.shape[0]
        x = np.zeros(n)
        y = np.empty((u.shape[0], layer.C.shape[0]))
        for i in range(u.shape[0]):
            y[i] = layer.C @ x + layer.D @ u[i] + layer.g
            x = layer.A @ x + layer.B @ u[i]
        return y
    if isinstance(layer, Activation):
        if layer.fn == "relu":
            return np.maximum(u, 0.0)
        if layer.fn == "tanh":
            return np.tanh(u)
        return 1.0 / (1.0 + np.exp(-u))
    if isinstance(layer, GroupSort):
        c = u.shape[-1]
        v = u.reshape(u.shape[:-1] + (c // layer.group_size, layer.group_size))
        return np.sort(v, axis=-1).reshape(u.shape)
    if isinstance(layer, (AvgPool, MaxPool)):
        return _pool_windows(u, layer.extent, layer.stride, isinstance(layer, MaxPool))
    if isinstance(layer, Flatten):
        return u.reshape(-1)
    if isinstance(layer, Residual):
        return u + evaluate(layer.inner, u)
    raise ModelError(f"unsupported layer {type(layer).__name__}")


def evaluate(net: Network, u: np.ndarray) -> np.ndarray:
    """Forward pass of a single sample (channels-last, no batch axis)."""
    u = np.asarray(u, dtype=np.float64)
    shapes = trace_shapes(net)
    if u.shape != net.input.array_shape():
        raise ModelError(f"input shape {u.shape} does not match interface {net.input.array_shape()}")
    for layer, shape in zip(net.layers, shapes):
        u = _apply_layer(layer, u, shape)
    return u


# ---------------------------------------------------------------------------
# units and splitting


@dataclass(frozen=True)
class Unit:
    """Smallest splittable piece: a linear layer with its trailing activation,
    or a single structural layer."""

    kind: str                    # linear | activation | groupsort | pool | flatten | residual
    layers: tuple[int, ...]      # indices into Network.layers

    @property
    def has_activation(self) -> bool:
        return self.kind == "linear" and len(self.layers) == 2


def to_units(net: Network) -> list[Unit]:
    units = []
    k, n = 0, len(net.layers)
    while k < n:
        layer = net.layers[k]
        if isinstance(layer, LinearLayer):
            if k + 1 < n and isinstance(net.layers[k + 1], Activation):
                units.append(Unit("linear", (k, k + 1)))
                k += 2
            else:
                units.append(Unit("linear", (k,)))
                k += 1
            continue
        if isinstance(layer, Activation):
            kind = "activation"
        elif isinstance(layer, GroupSort):
            kind = "groupsort"
        elif isinstance(layer, (AvgPool, MaxPool)):
            kind = "pool"
        elif isinstance(layer, Flatten):
            kind = "flatten"
        elif isinstance(layer, Residual):
            kind = "residual"
        else:
            raise ModelError(f"layer {k}: unsupported layer {type(layer).__name__}")
        units.append(Unit(kind, (k,)))
        k += 1
    return units


def split_subnetworks(net: Network, policy: str = "layer") -> list[list[Unit]]:
    """Partition the unit list into contiguous groups.

    Policies: "layer" (one unit per group), "mono" (everything in one group),
    "group:<g>" (chunks of g units), "cuts:<i,j,...>" (cut after the given
    1-based unit indices).
    """
    units = to_units(net)
    n = len(units)
    if policy == "layer":
        return [[u] for u in units]
    if policy == "mono":
        return [units]
    if policy.startswith("group:"):
        try:
            g = int(policy.split(":", 1)[1])
        except ValueError:
            raise SplitError(f"unparsable split policy {policy!r}") from None
        if g < 1:
            raise SplitError(f"group size must be positive, got {g}")
        return [units[i:i + g] for i in range(0, n, g)]
    if policy.startswith("cuts:"):
        try:
            cuts = [int(tok) for tok in policy.split(":", 1)[1].split(",") if tok.strip()]
        except ValueError:
            raise SplitError(f"unparsable split policy {policy!r}") from None
        if cuts != sorted(set(cuts)):
            raise SplitError(f"cut indices must be strictly increasing, got {cuts}")
        if cuts and (cuts[0] < 1 or cuts[-1] >= n):
            raise SplitError(f"cut index out of range 1..{n - 1}: {cuts}")
        bounds = [0] + cuts + [n]
        return [units[a:b] for a, b in zip(bounds, bounds[1:])]
    raise SplitError(f"unknown split policy {policy!r}")
