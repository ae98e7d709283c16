"""Reference bounds flanking the certified value.

mp_bound multiplies per-layer operator norms (trivial upper bound), while
empirical_lower_bound samples difference quotients (lower bound); a certified
bound must land between them.  unroll_to_dense and monolithic_lipsdp recast
structured networks so independent pipelines can cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .network import (Activation, AvgPool, Conv1D, Conv2D, Flatten, FullyConnected,
                      GroupSort, Interface, MaxPool, Network, Residual, StateSpace,
                      _apply_layer, evaluate, trace_shapes)
from .spectral import operator_norm, pool_lipschitz

LOCAL_PAIR_DELTA = 1e-4   # finite-difference offset for local sample pairs
UNROLL_MAX_DIM = 4096


@dataclass
class MPBound:
    gamma: float
    converged: bool
    factors: list = field(default_factory=list)   # (layer index, kind, value)


def mp_bound(net: Network) -> MPBound:
    """Product of per-layer operator norms at the traced input supports.

    Slope-restricted activations and GroupSort are 1-Lipschitz, pooling
    contributes its channelwise norm, and a skip connection contributes
    1 + the bound of its inner path.
    """
    shapes = trace_shapes(net)   # shapes[k] is layer k's input interface
    gamma, converged, factors = 1.0, True, []
    for k, (layer, shape) in enumerate(zip(net.layers, shapes)):
        if isinstance(layer, (Activation, GroupSort, Flatten)):
            factors.append((k, type(layer).__name__, 1.0))
            continue
        if isinstance(layer, Residual):
            inner = mp_bound(layer.inner)
            converged &= inner.converged
            value = 1.0 + inner.gamma
        elif isinstance(layer, (AvgPool, MaxPool)):
            value = pool_lipschitz(layer, shape)
        else:
            value, ok = operator_norm(layer, shape)
            converged &= ok
        factors.append((k, type(layer).__name__, float(value)))
        gamma *= float(value)
    return MPBound(gamma, converged, factors)


def _shard_rng(seed: int, shard: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(shard + 1)[shard])


def empirical_lower_bound(net: Network, n_samples: int = 200, seed: int = 0,
                          shards: int = 4) -> float:
    """Largest sampled difference quotient ||f(x1)-f(x2)|| / ||x1-x2||.

    Each shard draws independent pairs plus local pairs (x, x + delta*e);
    shard seeds derive from the master seed, so results are reproducible and
    shards could run concurrently without changing the answer.
    """
    if n_samples < 1:
        raise ModelError("empirical_lower_bound needs n_samples >= 1")
    shape = net.input.array_shape()
    best = 0.0
    per_shard = -(-n_samples // shards)
    for shard in range(shards):
        rng = _shard_rng(seed, shard)
        for _ in range(per_shard):
            x1 = rng.standard_normal(shape)
            x2 = rng.standard_normal(shape)
            dx = np.linalg.norm(x1 - x2)
            if dx > 0.0:
                dy = np.linalg.norm(evaluate(net, x1) - evaluate(net, x2))
                best = max(best, dy / dx)
            e = rng.standard_normal(shape)
            ne = np.linalg.norm(e)
            if ne == 0.0:
                continue
            e *= LOCAL_PAIR_DELTA / ne
            dy = np.linalg.norm(evaluate(net, x1 + e) - evaluate(net, x1))
            best = max(best, dy / LOCAL_PAIR_DELTA)
    return float(best)


def _dense_of_layer(layer, shape: Interface) -> tuple[np.ndarray, np.ndarray]:
    """Explicit (matrix, bias) of one linear layer at the traced support."""
    n_in = shape.total_dim
    zero = np.zeros(shape.array_shape())
    b = _apply_layer(layer, zero, shape).reshape(-1)
    M = np.empty((b.size, n_in))
    flat = zero.reshape(-1)
    for k in range(n_in):
        flat[k] = 1.0
        M[:, k] = _apply_layer(layer, zero, shape).reshape(-1) - b
        flat[k] = 0.0
    return M, b


def unroll_to_dense(net: Network, support: tuple[int, ...] | None = None) -> Network:
    """Rewrite every structured linear layer as an explicit dense layer.

    The result is a vector-interface network (convolutions and average pools
    become banded matrices at the traced sizes, flatten disappears) whose
    forward map matches the original exactly, so the dense-only pipeline can
    cross-check the structured one.  Guarded to small traced sizes.
    """
    if support is not None:
        net = Network(Interface(net.input.signal_dims, net.input.channels,
                                tuple(support)), net.layers)
    shapes = trace_shapes(net)   # shapes[k] is layer k's input interface
    for s in shapes:
        if s.total_dim > UNROLL_MAX_DIM:
            raise ModelError(f"unrolled dimension {s.total_dim} exceeds the "
                             f"{UNROLL_MAX_DIM} guard")
    layers = []
    for layer, shape in zip(net.layers, shapes):
        if isinstance(layer, (FullyConnected, Activation, GroupSort, Residual)):
            layers.append(layer)
        elif isinstance(layer, (Conv1D, Conv2D, StateSpace, AvgPool)):
            M, b = _dense_of_layer(layer, shape)
            layers.append(FullyConnected(M, b))
        elif isinstance(layer, Flatten):
            continue
        else:
            raise ModelError(f"cannot unroll layer {type(layer).__name__} "
                             f"(not linear)")
    return Network(Interface(0, net.input.total_dim), layers)


def monolithic_lipsdp(net: Network, solver: str = "auto", tol: float = 1e-8,
                      max_iter: int = 200):
    """Whole-net certificate: one banded block covering every dense layer.

    Restricted to alternating dense/activation networks; equivalent to the
    split assembly by construction, which the split-invariance tests exercise.
    """
    prev_linear = False
    for k, layer in enumerate(net.layers):
        if isinstance(layer, FullyConnected):
            prev_linear = True
        elif isinstance(layer, Activation):
            if not prev_linear:
                raise ModelError(f"layer {k}: activation must follow a dense layer")
            prev_linear = False
        else:
            raise ModelError(f"layer {k}: monolithic assembly covers dense/activation "
                             f"networks only, got {type(layer).__name__}")
    from .pipeline import certify

    return certify(net, split="mono", solver=solver, tol=tol, max_iter=max_iter)
