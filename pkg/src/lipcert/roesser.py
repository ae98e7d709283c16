"""State-space realizations of 1-D and 2-D convolutions.

A convolution y[i] = g + sum_t K[t] u[i - t] over a d-dimensional index i is
realized as a recursion with one state vector per signal dimension:

    [x_1[i + e_1]]   [A_11 .. A_1d] [x_1[i]]   [B_1]
    [    ...     ] = [    ...     ] [  ...  ] + [...] u[i]
    [x_d[i + e_d]]   [A_d1 .. A_dd] [x_d[i]]   [B_d]

         y[i]      =  C_1 x_1[i] + ... + C_d x_d[i] + D u[i] + g

with zero states on the boundary of the support rectangle.  Strided
convolutions are reduced to stride 1 by stacking each stride-block of pixels
into the channel dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError


@dataclass
class RoesserModel:
    """Block state-space model with one propagation direction per signal dim.

    A is a d x d nested list of blocks (A[i][j] has shape n_i x n_j), B a list
    of n_i x c_in blocks, C a list of c_out x n_i blocks.  Empty state
    dimensions (n_i = 0) are legal and carried as zero-size arrays.
    """

    dims: int                     # number of signal dimensions, 1 or 2
    state_dims: tuple[int, ...]   # n_1..n_d
    A: list[list[np.ndarray]]
    B: list[np.ndarray]
    C: list[np.ndarray]
    D: np.ndarray                 # c_out x c_in
    g: np.ndarray                 # c_out
    extents: tuple[int, ...] = field(default=())   # kernel extents when realized from taps

    @property
    def c_in(self) -> int:
        return self.D.shape[1]

    @property
    def c_out(self) -> int:
        return self.D.shape[0]

    @property
    def n_total(self) -> int:
        return sum(self.state_dims)

    def full_A(self) -> np.ndarray:
        """Stacked state matrix, shape (n_total, n_total)."""
        return np.block(self.A) if self.n_total else np.zeros((0, 0))

    def full_B(self) -> np.ndarray:
        return np.vstack(self.B) if self.n_total else np.zeros((0, self.c_in))

    def full_C(self) -> np.ndarray:
        return np.hstack(self.C) if self.n_total else np.zeros((self.c_out, 0))

    def describe(self) -> str:
        """Plain-text block-matrix listing for debugging and golden tests."""
        lines = [f"state dims: {self.state_dims}  c_in={self.c_in}  c_out={self.c_out}"]
        for i in range(self.dims):
            for j in range(self.dims):
                lines.append(f"A[{i + 1}][{j + 1}] =\n{np.array_str(self.A[i][j], precision=6)}")
            lines.append(f"B[{i + 1}] =\n{np.array_str(self.B[i], precision=6)}")
        for i in range(self.dims):
            lines.append(f"C[{i + 1}] =\n{np.array_str(self.C[i], precision=6)}")
        lines.append(f"D =\n{np.array_str(self.D, precision=6)}")
        lines.append(f"g = {np.array_str(self.g, precision=6)}")
        return "\n".join(lines)


def realize_conv1d(kernel: np.ndarray, bias: np.ndarray | None = None) -> RoesserModel:
    """Realize a 1-D convolution with taps kernel[t], t = 0..r.

    kernel has shape (r+1, c_out, c_in).  The state stacks the last r inputs
    (u[i-1], ..., u[i-r]); A is the block down-shift, B injects u[i] into the
    first slot, C holds the delayed taps and D the instantaneous one.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 3 or kernel.shape[0] < 1:
        raise ModelError(f"1-D kernel must have shape (r+1, c_out, c_in), got {kernel.shape}")
    r = kernel.shape[0] - 1
    c_out, c_in = kernel.shape[1], kernel.shape[2]
    g = np.zeros(c_out) if bias is None else np.asarray(bias, dtype=np.float64).reshape(c_out)

    n = c_in * r
    A = np.zeros((n, n))
    for k in range(1, r):
        A[k * c_in:(k + 1) * c_in, (k - 1) * c_in:k * c_in] = np.eye(c_in)
    B = np.zeros((n, c_in))
    if r:
        B[:c_in, :] = np.eye(c_in)
    # C = [K[1] ... K[r]] since state slot k holds u[i-1-k]
    C = np.hstack([kernel[t] for t in range(1, r + 1)]) if r else np.zeros((c_out, 0))
    D = kernel[0].copy()
    return RoesserModel(
        dims=1, state_dims=(n,), A=[[A]], B=[B], C=[C], D=D, g=g, extents=(r,),
    )


def realize_conv2d(kernel: np.ndarray, bias: np.ndarray | None = None) -> RoesserModel:
    """Realize a 2-D convolution with taps kernel[t1, t2], t_i = 0..r_i.

    kernel has shape (r1+1, r2+1, c_out, c_in).  State 1 (size c_out*r1)
    accumulates partial sums of completed kernel rows while propagating down;
    state 2 (size c_in*r2) carries the last r2 inputs of the current row.
    Block layout (1-indexed blocks, m = 1..r1, j = 1..r2):

        A11[m, m-1] = I            A12[m, j] = K[r1-m+1, r2-j+1]
        A21 = 0                    A22[j, j+1] = I
        B1[m] = K[r1-m+1, 0]       B2[r2] = I
        C1 = [0 ... 0 I]           C2[j] = K[0, r2-j+1]       D = K[0, 0]

    Degenerate extents (r_i = 0) drop the corresponding blocks, so a 1 x k
    kernel yields n1 = 0.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ModelError(f"2-D kernel must have shape (r1+1, r2+1, c_out, c_in), got {kernel.shape}")
    r1, r2 = kernel.shape[0] - 1, kernel.shape[1] - 1
    c_out, c_in = kernel.shape[2], kernel.shape[3]
    g = np.zeros(c_out) if bias is None else np.asarray(bias, dtype=np.float64).reshape(c_out)

    n1, n2 = c_out * r1, c_in * r2

    A11 = np.zeros((n1, n1))
    for m in range(2, r1 + 1):
        A11[(m - 1) * c_out:m * c_out, (m - 2) * c_out:(m - 1) * c_out] = np.eye(c_out)
    A12 = np.zeros((n1, n2))
    for m in range(1, r1 + 1):
        for j in range(1, r2 + 1):
            A12[(m - 1) * c_out:m * c_out, (j - 1) * c_in:j * c_in] = kernel[r1 - m + 1, r2 - j + 1]
    A21 = np.zeros((n2, n1))
    A22 = np.zeros((n2, n2))
    for j in range(1, r2):
        A22[(j - 1) * c_in:j * c_in, j * c_in:(j + 1) * c_in] = np.eye(c_in)

    B1 = np.zeros((n1, c_in))
    for m in range(1, r1 + 1):
        B1[(m - 1) * c_out:m * c_out, :] = kernel[r1 - m + 1, 0]
    B2 = np.zeros((n2, c_in))
    if r2:
        B2[(r2 - 1) * c_in:, :] = np.eye(c_in)

    C1 = np.zeros((c_out, n1))
    if r1:
        C1[:, (r1 - 1) * c_out:] = np.eye(c_out)
    C2 = np.zeros((c_out, n2))
    for j in range(1, r2 + 1):
        C2[:, (j - 1) * c_in:j * c_in] = kernel[0, r2 - j + 1]
    D = kernel[0, 0].copy()

    return RoesserModel(
        dims=2, state_dims=(n1, n2),
        A=[[A11, A12], [A21, A22]], B=[B1, B2], C=[C1, C2],
        D=D, g=g, extents=(r1, r2),
    )


def simulate(model: RoesserModel, u: np.ndarray, out_shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Iterate the recursion over a finitely supported input with zero
    boundary states.

    u is channels-last: (N, c_in) for 1-D models, (N1, N2, c_in) for 2-D.
    The default output support extends the input support by the kernel
    extents (every index where the response is possibly nonzero); pass
    out_shape to evaluate a different rectangle anchored at the origin.
    """
    u = np.asarray(u, dtype=np.float64)
    if model.dims == 1:
        if u.ndim != 2 or u.shape[1] != model.c_in:
            raise ModelError(f"expected input of shape (N, {model.c_in}), got {u.shape}")
        N = u.shape[0]
        M = N + (model.extents[0] if model.extents else 0) if out_shape is None else out_shape[0]
        A, B, C, D = model.A[0][0], model.B[0], model.C[0], model.D
        y = np.empty((M, model.c_out))
        x = np.zeros(model.state_dims[0])
        for i in range(M):
            ui = u[i] if i < N else np.zeros(model.c_in)
            y[i] = C @ x + D @ ui + model.g
            x = A @ x + B @ ui
        return y

    if u.ndim != 3 or u.shape[2] != model.c_in:
        raise ModelError(f"expected input of shape (N1, N2, {model.c_in}), got {u.shape}")
    N1, N2 = u.shape[0], u.shape[1]
    if out_shape is None:
        r1 = model.extents[0] if model.extents else 0
        r2 = model.extents[1] if model.extents else 0
        M1, M2 = N1 + r1, N2 + r2
    else:
        M1, M2 = out_shape
    (A11, A12), (A21, A22) = model.A
    B1, B2 = model.B
    C1, C2 = model.C
    D = model.D
    n1, n2 = model.state_dims
    y = np.empty((M1, M2, model.c_out))
    zero_u = np.zeros(model.c_in)
    # x1 propagates down rows (x1[0, :] = 0), x2 along each row (x2[:, 0] = 0).
    x1_row = np.zeros((M2, n1))
    for i1 in range(M1):
        x2 = np.zeros(n2)
        next_row = np.empty((M2, n1))
        for i2 in range(M2):
            ui = u[i1, i2] if (i1 < N1 and i2 < N2) else zero_u
            x1 = x1_row[i2]
            y[i1, i2] = C1 @ x1 + C2 @ x2 + D @ ui + model.g
            next_row[i2] = A11 @ x1 + A12 @ x2 + B1 @ ui
            x2 = A21 @ x1 + A22 @ x2 + B2 @ ui
        x1_row = next_row
    return y


@dataclass(frozen=True)
class ReshapeMap:
    """Stacks each stride-block of pixels into the channel dimension.

    For stride s the reshaped signal u'[i'] collects u[s*i' + tau] for every
    offset tau in [0, s) (row-major over offsets), so a strided convolution
    becomes a stride-1 convolution over c_in * prod(s) channels.  The same
    map turns a quadratic form X on original channels into the block-diagonal
    form I_{prod(s)} (x) X on reshaped channels.
    """

    stride: tuple[int, ...]
    c_in: int

    @property
    def copies(self) -> int:
        return int(np.prod(self.stride))

    @property
    def c_out(self) -> int:
        return self.c_in * self.copies

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        s = self.stride
        if len(s) == 1:
            N = u.shape[0]
            M = -(-N // s[0])
            out = np.zeros((M, self.c_out))
            for ti, tau in enumerate(np.ndindex(*s)):
                idx = np.arange(M) * s[0] + tau[0]
                valid = idx < N
                out[valid, ti * self.c_in:(ti + 1) * self.c_in] = u[idx[valid]]
            return out
        N1, N2 = u.shape[0], u.shape[1]
        M1, M2 = -(-N1 // s[0]), -(-N2 // s[1])
        out = np.zeros((M1, M2, self.c_out))
        for ti, tau in enumerate(np.ndindex(*s)):
            i1 = np.arange(M1) * s[0] + tau[0]
            i2 = np.arange(M2) * s[1] + tau[1]
            v1, v2 = i1 < N1, i2 < N2
            out[np.ix_(v1, v2, range(ti * self.c_in, (ti + 1) * self.c_in))] = \
                u[np.ix_(i1[v1], i2[v2], range(self.c_in))]
        return out


def reshape_kernel(kernel: np.ndarray, stride: tuple[int, ...]) -> np.ndarray:
    """Remap kernel taps onto the reshaped (stride-stacked) signal.

    Every original tap index t splits uniquely as t = s * t' - tau with
    tau in [0, s), so the reshaped kernel has taps
    K'[t'][:, (tau, q)] = K[s * t' - tau][:, q], extents r' = ceil(r / s).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    d = len(stride)
    r = tuple(kernel.shape[i] - 1 for i in range(d))
    c_out, c_in = kernel.shape[d], kernel.shape[d + 1]
    rp = tuple(-(-r[i] // stride[i]) for i in range(d))
    copies = int(np.prod(stride))
    new = np.zeros(tuple(rp[i] + 1 for i in range(d)) + (c_out, c_in * copies))
    for tp in np.ndindex(*(rp[i] + 1 for i in range(d))):
        for ti, tau in enumerate(np.ndindex(*stride)):
            t = tuple(stride[i] * tp[i] - tau[i] for i in range(d))
            if all(0 <= t[i] <= r[i] for i in range(d)):
                new[tp][:, ti * c_in:(ti + 1) * c_in] = kernel[t]
    return new


def realize_strided(kernel: np.ndarray, bias: np.ndarray | None,
                    stride: tuple[int, ...]) -> tuple[ReshapeMap, RoesserModel]:
    """Factor a strided convolution into (pixel-stacking reshape, stride-1 model).

    simulate(model, rmap.apply(u)) equals the strided convolution of u wherever
    the strided output is defined.  Stride 1 returns the plain realization with
    an identity reshape.
    """
    stride = tuple(int(s) for s in stride)
    if any(s < 1 for s in stride):
        raise ModelError(f"stride must be >= 1 componentwise, got {stride}")
    kernel = np.asarray(kernel, dtype=np.float64)
    d = len(stride)
    c_in = kernel.shape[d + 1]
    rmap = ReshapeMap(stride=stride, c_in=c_in)
    new_kernel = kernel if all(s == 1 for s in stride) else reshape_kernel(kernel, stride)
    model = realize_conv1d(new_kernel, bias) if d == 1 else realize_conv2d(new_kernel, bias)
    return rmap, model
