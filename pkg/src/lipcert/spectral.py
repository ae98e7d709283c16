"""Operator norms of the linear pieces via power iteration.

Each linear layer is treated as the map u -> L(u) - L(0) at the traced input
support; power iteration runs on the composition adjoint(L) . L, so the
estimate converges to the largest singular value from below.
"""

from __future__ import annotations

import numpy as np

from .errors import ModelError
from .network import (
    AvgPool,
    Conv1D,
    Conv2D,
    FullyConnected,
    Interface,
    MaxPool,
    StateSpace,
    conv_out_length,
    pool_out_length,
    _conv_eval,
)

POWER_ITERS = 500
POWER_RTOL = 1e-10
POWER_SEED = 1234


def power_iteration(matvec, rmatvec, in_shape, iters=POWER_ITERS, rtol=POWER_RTOL,
                    seed=POWER_SEED):
    """Largest singular value of the linear map given by matvec/rmatvec.

    Returns (sigma, converged).  Deterministic: fixed-seed start vector.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(in_shape)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0, True
    v /= nv
    sigma = 0.0
    for _ in range(iters):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True
        v = rmatvec(w / nw)
        sigma_new = np.linalg.norm(v)   # ||A^T A v|| / ||A v|| * ... = sigma estimate
        if sigma_new == 0.0:
            return 0.0, True
        v /= sigma_new
        if abs(sigma_new - sigma) <= rtol * max(sigma_new, 1e-300):
            return sigma_new, True
        sigma = sigma_new
    return sigma, False


def conv_adjoint(kernel, y, stride, anchors, in_support):
    """Adjoint of the linear part of _conv_eval at the given geometry."""
    d = y.ndim - 1
    extent = tuple(kernel.shape[i] - 1 for i in range(d))
    out_shape = y.shape[:d]
    pad_left = tuple(extent[i] - anchors[i] for i in range(d))
    need = tuple(stride[i] * (out_shape[i] - 1) + extent[i] + 1 for i in range(d))
    w_shape = tuple(max(need[i], in_support[i] + pad_left[i]) for i in range(d))
    c_in = kernel.shape[d + 1]
    w = np.zeros(w_shape + (c_in,))
    for t in np.ndindex(*(e + 1 for e in extent)):
        sl = tuple(slice(extent[i] - t[i], extent[i] - t[i] + stride[i] * out_shape[i], stride[i])
                   for i in range(d))
        w[sl] += np.einsum("oc,...o->...c", kernel[t], y)
    crop = tuple(slice(pad_left[i], pad_left[i] + in_support[i]) for i in range(d))
    return w[crop]


def _conv_geometry(layer, in_shape: Interface):
    out, anchors = zip(*(conv_out_length(n, r, s, layer.padding)
                         for n, r, s in zip(in_shape.support, layer.extent, layer.stride)))
    return tuple(out), tuple(anchors)


def _ssm_adjoint(layer: StateSpace, y: np.ndarray) -> np.ndarray:
    # time-reversed recursion: z[i] = A^T z[i+1] + C^T y[i], u'[i] = B^T z[i+1] + D^T y[i]
    N = y.shape[0]
    u = np.empty((N, layer.B.shape[1]))
    z = np.zeros(layer.A.shape[0])
    for i in range(N - 1, -1, -1):
        u[i] = layer.B.T @ z + layer.D.T @ y[i]
        z = layer.A.T @ z + layer.C.T @ y[i]
    return u


def avgpool_matrix(extent, stride, support) -> np.ndarray:
    """Explicit single-channel pooling matrix at the traced support."""
    d = len(extent)
    out = tuple(pool_out_length(support[i], extent[i], stride[i]) for i in range(d))
    n_out, n_in = int(np.prod(out)), int(np.prod(support))
    window = float(np.prod([e + 1 for e in extent]))
    M = np.zeros((n_out, n_in))
    for j in np.ndindex(*out):
        row = np.ravel_multi_index(j, out)
        for t in np.ndindex(*(e + 1 for e in extent)):
            i = tuple(stride[k] * j[k] + t[k] for k in range(d))
            M[row, np.ravel_multi_index(i, support)] += 1.0 / window
    return M


def maxpool_window_multiplicity(extent, stride, support) -> int:
    """Largest number of pooling windows any single input position belongs to."""
    d = len(extent)
    out = tuple(pool_out_length(support[i], extent[i], stride[i]) for i in range(d))
    count = np.zeros(support, dtype=int)
    for j in np.ndindex(*out):
        sl = tuple(slice(stride[k] * j[k], stride[k] * j[k] + extent[k] + 1) for k in range(d))
        count[sl] += 1
    return int(count.max())


def pool_lipschitz(layer, in_shape: Interface) -> float:
    """Channel-wise Lipschitz constant mu of a pooling layer.

    Non-overlapping windows (r + 1 = s): mu = 1/sqrt(|window|) for average
    pooling, 1 for max pooling.  Overlapping average pooling falls back to
    power iteration on the explicit pooling matrix; overlapping max pooling
    uses sqrt(max window multiplicity), which is sound but possibly loose.
    """
    non_overlap = all(r + 1 == s for r, s in zip(layer.extent, layer.stride))
    if isinstance(layer, MaxPool):
        if non_overlap:
            return 1.0
        return float(np.sqrt(maxpool_window_multiplicity(layer.extent, layer.stride,
                                                         in_shape.support)))
    window = float(np.prod([e + 1 for e in layer.extent]))
    if non_overlap:
        return 1.0 / np.sqrt(window)
    M = avgpool_matrix(layer.extent, layer.stride, in_shape.support)
    sigma, _ = power_iteration(lambda v: M @ v, lambda v: M.T @ v, M.shape[1])
    return float(sigma)


def operator_norm(layer, in_shape: Interface) -> tuple[float, bool]:
    """Largest singular value of a linear layer at the traced support."""
    if isinstance(layer, FullyConnected):
        W = layer.weight
        return power_iteration(lambda v: W @ v, lambda v: W.T @ v, W.shape[1])
    if isinstance(layer, (Conv1D, Conv2D)):
        out, anchors = _conv_geometry(layer, in_shape)
        K = layer.kernel
        zero_b = np.zeros(K.shape[-2])
        mv = lambda v: _conv_eval(K, zero_b, v, layer.stride, anchors, out)
        rmv = lambda y: conv_adjoint(K, y, layer.stride, anchors, in_shape.support)
        return power_iteration(mv, rmv, in_shape.array_shape())
    if isinstance(layer, StateSpace):
        def mv(v):
            x = np.zeros(layer.A.shape[0])
            y = np.empty((v.shape[0], layer.C.shape[0]))
            for i in range(v.shape[0]):
                y[i] = layer.C @ x + layer.D @ v[i]
                x = layer.A @ x + layer.B @ v[i]
            return y
        return power_iteration(mv, lambda y: _ssm_adjoint(layer, y), in_shape.array_shape())
    if isinstance(layer, (AvgPool, MaxPool)):
        return pool_lipschitz(layer, in_shape), True
    raise ModelError(f"operator_norm: not a linear layer: {type(layer).__name__}")
