"""Random-weight model zoo.

Architectures are written in a compact dotted nomenclature:

    d(N)          dense layer with N output neurons
    c(C,K,S)      2-D convolution, C output channels, K x K kernel, stride S
    p(av,K,S)     average pooling, window K x K, stride S   (p(max,...) likewise)
    res(N,L)      residual layer whose path holds L dense layers of width N
    token^n       repeat token n times

A ReLU is inserted after every dense/conv layer except the network's final
linear layer; residual paths carry their ReLU internally.  A Flatten is
inserted automatically when a dense layer follows a signal-valued interface.

Weights are drawn deterministically from (name, seed, init) and rounded to
float32 so that saved models reload bit-identically.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ModelError
from .network import (
    Activation,
    AvgPool,
    Conv1D,
    Conv2D,
    Flatten,
    FullyConnected,
    Interface,
    MaxPool,
    Network,
    Residual,
    StateSpace,
    trace_shapes,
)
from .spectral import operator_norm

INITS = ("kaiming", "normalized")

# named architectures: (spec string, input interface, conv padding)
_MNIST_IMG = Interface(2, 1, (28, 28))
_CIFAR_IMG = Interface(2, 3, (32, 32))
_MNIST_FLAT = Interface(0, 784)

NAMED = {
    "lenet5-avg": ("c(6,5,1).p(av,2,2).c(16,5,1).p(av,2,2).d(120).d(84).d(10)", _MNIST_IMG, "valid"),
    "lenet5-max": ("c(6,5,1).p(max,2,2).c(16,5,1).p(max,2,2).d(120).d(84).d(10)", _MNIST_IMG, "valid"),
    "2c2f": ("c(16,4,2).c(32,4,2).d(100).d(10)", _MNIST_IMG, "same"),
    "4c3f": ("c(32,3,1).c(32,4,2).c(64,3,1).c(64,4,2).d(512)^2.d(10)", _MNIST_IMG, "same"),
    "6c2f": ("c(32,3,1)^2.c(32,4,2).c(64,3,1)^2.c(64,4,2).d(512).d(10)", _CIFAR_IMG, "same"),
    "fc-r18": ("d(64).res(64,2)^8.d(10)", _MNIST_FLAT, None),
    "c-r18": ("c(16,7,2).p(max,2,2).res(16,3,1,2)^8.p(av,2,2).d(10)", _MNIST_IMG, "same"),
}

_TOKEN = re.compile(r"^([a-z]+)\(([^()]*)\)(?:\^(\d+))?$")


def _parse_tokens(spec: str):
    tokens = []
    for raw in spec.split("."):
        m = _TOKEN.match(raw.strip())
        if not m:
            raise ModelError(f"unparsable architecture token {raw!r}")
        head, args, rep = m.group(1), [a.strip() for a in m.group(2).split(",")], m.group(3)
        if head not in ("d", "c", "p", "res"):
            raise ModelError(f"unparsable architecture token {raw!r}")
        tokens.extend([(head, args)] * (int(rep) if rep else 1))
    return tokens


def _f32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _kaiming(rng: np.random.Generator, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return _f32(rng.uniform(-bound, bound, size=shape))


def _bias(rng: np.random.Generator, n, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return _f32(rng.uniform(-bound, bound, size=n))


def _build_layers(tokens, input_shape: Interface, padding: str, rng) -> list:
    layers = []
    shape = input_shape

    def maybe_flatten():
        nonlocal shape
        if shape.signal_dims:
            layers.append(Flatten())
            shape = Interface(0, shape.total_dim)

    for head, args in tokens:
        if head == "d":
            (n,) = map(int, args)
            maybe_flatten()
            fan_in = shape.channels
            layers.append(FullyConnected(_kaiming(rng, (n, fan_in), fan_in), _bias(rng, n, fan_in)))
            layers.append(Activation("relu"))
            shape = Interface(0, n)
        elif head == "c":
            c_out, k, s = map(int, args)
            if shape.signal_dims != 2:
                raise ModelError("convolution token on a non-image interface")
            fan_in = shape.channels * k * k
            kernel = _kaiming(rng, (k, k, c_out, shape.channels), fan_in)
            layers.append(Conv2D(kernel, _bias(rng, c_out, fan_in), (s, s), padding))
            layers.append(Activation("relu"))
            out = tuple(trace_shapes(Network(shape, [layers[-2]]))[-1].support)
            shape = Interface(2, c_out, out)
        elif head == "p":
            ptype, k, s = args[0], int(args[1]), int(args[2])
            if ptype not in ("av", "max"):
                raise ModelError(f"unknown pooling type {ptype!r}")
            cls = AvgPool if ptype == "av" else MaxPool
            d = shape.signal_dims
            layers.append(cls((k - 1,) * d, (s,) * d))
            out = tuple(trace_shapes(Network(shape, [layers[-1]]))[-1].support)
            shape = Interface(d, shape.channels, out)
        elif head == "res":
            if len(args) == 4:
                raise ModelError("convolutional residual paths are not supported; "
                                 "only dense res(N,L) layers are implemented")
            n, depth = map(int, args)
            if depth != 2:
                raise ModelError(f"residual paths with {depth} layers are not supported (only 2)")
            maybe_flatten()
            if shape.channels != n:
                raise ModelError(f"residual layer of width {n} on a {shape.channels}-channel interface")
            inner = [
                FullyConnected(_kaiming(rng, (n, n), n), _bias(rng, n, n)),
                Activation("relu"),
                FullyConnected(_kaiming(rng, (n, n), n), _bias(rng, n, n)),
            ]
            layers.append(Residual(Network(Interface(0, n), inner)))
        else:
            raise ModelError(f"unknown architecture token {head!r}")

    # no activation after the final linear layer
    if layers and isinstance(layers[-1], Activation):
        layers.pop()
    return layers


def _normalize_weights(net: Network) -> None:
    """Scale every linear weight so its operator norm at the traced support is 1."""
    shapes = trace_shapes(net)
    for layer, shape in zip(net.layers, shapes):
        if isinstance(layer, FullyConnected):
            layer.weight = _f32(layer.weight / np.linalg.svd(layer.weight, compute_uv=False)[0])
        elif isinstance(layer, (Conv1D, Conv2D, StateSpace)):
            sigma, _ = operator_norm(layer, shape)
            layer.kernel = _f32(layer.kernel / sigma)
        elif isinstance(layer, Residual):
            _normalize_weights(layer.inner)


def generate_architecture(name: str, seed: int = 0, init: str = "kaiming",
                          input_shape: Interface | None = None) -> Network:
    """Deterministic random-weight network for a named or spec-string architecture.

    Spec strings default to a 28x28x1 image input when they start with a
    conv/pool token and to a flat 784 input otherwise; pass input_shape to
    override.  Named architectures pin their own input and padding.
    """
    if init not in INITS:
        raise ModelError(f"unknown init {init!r}; supported: {INITS}")
    if name in NAMED:
        spec, default_input, padding = NAMED[name]
    else:
        spec, default_input, padding = name, None, "same"
    tokens = _parse_tokens(spec)
    if input_shape is None:
        if default_input is not None:
            input_shape = default_input
        else:
            input_shape = _MNIST_IMG if tokens[0][0] in ("c", "p") else _MNIST_FLAT
    rng = np.random.default_rng(seed)
    net = Network(input_shape, _build_layers(tokens, input_shape, padding, rng))
    if init == "normalized":
        _normalize_weights(net)
    trace_shapes(net)
    return net
