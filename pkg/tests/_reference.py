"""Brute-force reference implementations used as independent test oracles.

Everything here is written as plain index loops on purpose: no state-space
recursions, no FFTs, no vectorized shortcuts shared with the library code.
"""

import numpy as np


def direct_conv1d(kernel, u, bias=None, stride=1, anchor=0, out_len=None):
    """y[j] = g + sum_t K[t] u[stride*j + anchor - t], u zero off support.

    kernel: (r+1, c_out, c_in), u: (N, c_in).  Default output covers every
    index with any overlap (full padding): floor((N + r - 1 - anchor)/stride) + 1.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    r = kernel.shape[0] - 1
    c_out = kernel.shape[1]
    N = u.shape[0]
    g = np.zeros(c_out) if bias is None else np.asarray(bias, dtype=np.float64)
    if out_len is None:
        out_len = (N + r - 1 - anchor) // stride + 1
    y = np.zeros((out_len, c_out))
    for j in range(out_len):
        acc = g.copy()
        for t in range(r + 1):
            i = stride * j + anchor - t
            if 0 <= i < N:
                acc = acc + kernel[t] @ u[i]
        y[j] = acc
    return y


def direct_conv2d(kernel, u, bias=None, stride=(1, 1), anchor=(0, 0), out_shape=None):
    """2-D analogue of direct_conv1d.

    kernel: (r1+1, r2+1, c_out, c_in), u: (N1, N2, c_in).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    r1, r2 = kernel.shape[0] - 1, kernel.shape[1] - 1
    c_out = kernel.shape[2]
    N1, N2 = u.shape[0], u.shape[1]
    g = np.zeros(c_out) if bias is None else np.asarray(bias, dtype=np.float64)
    if out_shape is None:
        out_shape = ((N1 + r1 - 1 - anchor[0]) // stride[0] + 1,
                     (N2 + r2 - 1 - anchor[1]) // stride[1] + 1)
    y = np.zeros((out_shape[0], out_shape[1], c_out))
    for j1 in range(out_shape[0]):
        for j2 in range(out_shape[1]):
            acc = g.copy()
            for t1 in range(r1 + 1):
                for t2 in range(r2 + 1):
                    i1 = stride[0] * j1 + anchor[0] - t1
                    i2 = stride[1] * j2 + anchor[1] - t2
                    if 0 <= i1 < N1 and 0 <= i2 < N2:
                        acc = acc + kernel[t1, t2] @ u[i1, i2]
            y[j1, j2] = acc
    return y


def dense_matrix_of(linear_map, in_shape, out_shape):
    """Column-by-column materialization of a linear map on channels-last arrays."""
    n_in = int(np.prod(in_shape))
    n_out = int(np.prod(out_shape))
    W = np.zeros((n_out, n_in))
    zero = linear_map(np.zeros(in_shape)).reshape(n_out)
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        W[:, k] = linear_map(e.reshape(in_shape)).reshape(n_out) - zero
    return W
