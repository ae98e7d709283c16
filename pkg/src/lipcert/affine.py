"""Sparse affine matrix expressions and the block accumulator.

An AffMat is a matrix-valued affine function of the problem parameters,
stored as triplets (p, i, j, v) meaning  M(x) += v * x_p  at entry (i, j),
with p = -1 for constant entries.  Symmetric expressions (sym=True) store the
upper triangle only, an entry standing for both (i, j) and (j, i).

BlockAcc assembles one symmetric PSD block out of sub-matrix placements on a
segment grid; mirrored placements are implied, so callers place each
off-diagonal sub-block once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError

_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_V = np.zeros(0, dtype=np.float64)


def _rows_csr(B: np.ndarray):
    """Nonzero structure of dense B by row: (indptr, cols, vals)."""
    mask = B != 0.0
    counts = mask.sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    rows, cols = np.nonzero(mask)
    return indptr.astype(np.int64), cols.astype(np.int64), B[rows, cols]


def _gather(indptr, cols, vals, rows):
    """Concatenate the (cols, vals) runs of the requested rows."""
    starts, ends = indptr[rows], indptr[rows + 1]
    counts = ends - starts
    total = int(counts.sum())
    if total == 0:
        return _EMPTY_I, _EMPTY_V, counts
    prev = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(total, dtype=np.int64) + np.repeat(starts - prev, counts)
    return cols[pos], vals[pos], counts


@dataclass(frozen=True)
class AffMat:
    m: int
    n: int
    sym: bool
    p: np.ndarray   # parameter index, -1 for constant entries
    i: np.ndarray
    j: np.ndarray
    v: np.ndarray
    # (copies, tile) when the expression is known to be I_copies (x) tile;
    # lets block builders exploit the repeated-diagonal sparsity
    kron: tuple | None = None

    def __post_init__(self):
        if self.sym and (self.m != self.n or (len(self.i) and np.any(self.i > self.j))):
            raise AssemblyError("symmetric AffMat must be square with upper-triangle entries")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def const(M: np.ndarray, sym: bool = False) -> "AffMat":
        M = np.asarray(M, dtype=np.float64)
        if sym:
            iu, ju = np.nonzero(np.triu(M))
            if not np.allclose(M, M.T, atol=0.0):
                raise AssemblyError("sym=True requires a symmetric matrix")
            return AffMat(M.shape[0], M.shape[1], True,
                          np.full(len(iu), -1, dtype=np.int64), iu.astype(np.int64),
                          ju.astype(np.int64), M[iu, ju])
        i, j = np.nonzero(M)
        return AffMat(M.shape[0], M.shape[1], False,
                      np.full(len(i), -1, dtype=np.int64), i.astype(np.int64),
                      j.astype(np.int64), M[i, j])

    @staticmethod
    def zeros(m: int, n: int, sym: bool = False) -> "AffMat":
        return AffMat(m, n, sym, _EMPTY_I.copy(), _EMPTY_I.copy(), _EMPTY_I.copy(),
                      _EMPTY_V.copy())

    @staticmethod
    def eye_scaled(c: int, coeff: float = 1.0, param: int = -1) -> "AffMat":
        """coeff * x_param * I (or coeff * I when param = -1)."""
        idx = np.arange(c, dtype=np.int64)
        # a scaled identity is I_c (x) (1x1 tile), so consumers may split it
        # along any column partition
        kron = (c, AffMat.eye_scaled(1, coeff, param)) if c > 1 else None
        return AffMat(c, c, True, np.full(c, param, dtype=np.int64), idx, idx.copy(),
                      np.full(c, float(coeff)), kron)

    @staticmethod
    def from_structure(offset: int, structure, c: int) -> "AffMat":
        """Symmetric tile spanned by a structured variable starting at offset."""
        ps, is_, js, vs = [], [], [], []
        for local, entries in enumerate(structure.basis_entries(c)):
            for i, j, v in entries:
                ps.append(offset + local)
                is_.append(i)
                js.append(j)
                vs.append(v)
        return AffMat(c, c, True, np.asarray(ps, dtype=np.int64),
                      np.asarray(is_, dtype=np.int64), np.asarray(js, dtype=np.int64),
                      np.asarray(vs, dtype=np.float64))

    @staticmethod
    def diag_params(offset: int, c: int, shift: float = 0.0) -> "AffMat":
        """diag of c consecutive parameters, plus an optional constant shift."""
        idx = np.arange(c, dtype=np.int64)
        p = offset + idx
        i, j, v = idx, idx.copy(), np.ones(c)
        if shift:
            p = np.concatenate([p, np.full(c, -1, dtype=np.int64)])
            i = np.concatenate([i, idx])
            j = np.concatenate([j, idx])
            v = np.concatenate([v, np.full(c, float(shift))])
        return AffMat(c, c, True, p, i, j, v)

    # -- views -------------------------------------------------------------

    def scale(self, alpha: float) -> "AffMat":
        kron = (self.kron[0], self.kron[1].scale(alpha)) if self.kron else None
        return AffMat(self.m, self.n, self.sym, self.p, self.i, self.j, self.v * alpha,
                      kron)

    def kron_eye(self, N: int) -> "AffMat":
        """I_N (x) self for symmetric tiles."""
        if not self.sym:
            raise AssemblyError("kron_eye needs a symmetric tile")
        k = np.repeat(np.arange(N, dtype=np.int64) * self.n, len(self.i))
        return AffMat(N * self.n, N * self.n, True,
                      np.tile(self.p, N), np.tile(self.i, N) + k, np.tile(self.j, N) + k,
                      np.tile(self.v, N), kron=(N, self))

    def unkron_eye(self, N: int) -> "AffMat":
        """Inverse of kron_eye for expressions known to be I_N (x) tile."""
        if self.m % N:
            raise AssemblyError(f"dimension {self.m} not divisible by {N}")
        c = self.m // N
        full = self.full()
        inside = (full.i < c) & (full.j < c)
        tile = AffMat(c, c, False, full.p[inside], full.i[inside], full.j[inside],
                      full.v[inside])
        # verify the block-repetition claim on a few random parameter points
        rng = np.random.default_rng(0)
        for _ in range(2):
            x = rng.standard_normal(int(max(self.p.max(initial=-1) + 1, 1)))
            M = self.materialize(x)
            T = tile.materialize(x)
            if not np.allclose(M, np.kron(np.eye(N), T), atol=1e-12):
                raise AssemblyError("expression is not a repeated tile; cannot pull it back")
        keep = tile.i <= tile.j
        return AffMat(c, c, True, tile.p[keep], tile.i[keep], tile.j[keep], tile.v[keep])

    def full(self) -> "AffMat":
        """Expand symmetric upper storage to explicit full storage."""
        if not self.sym:
            return self
        off = self.i != self.j
        return AffMat(self.m, self.n, False,
                      np.concatenate([self.p, self.p[off]]),
                      np.concatenate([self.i, self.j[off]]),
                      np.concatenate([self.j, self.i[off]]),
                      np.concatenate([self.v, self.v[off]]))

    @property
    def T(self) -> "AffMat":
        if self.sym:
            return self
        return AffMat(self.n, self.m, False, self.p, self.j, self.i, self.v)

    # -- algebra -----------------------------------------------------------

    def matmul_dense(self, B: np.ndarray) -> "AffMat":
        """self @ B for dense B."""
        B = np.asarray(B, dtype=np.float64)
        if self.n != B.shape[0]:
            raise AssemblyError(f"matmul shape mismatch: {self.n} vs {B.shape[0]}")
        src = self.full()
        indptr, cols, vals = _rows_csr(B)
        out_j, out_bv, counts = _gather(indptr, cols, vals, src.j)
        return AffMat(self.m, B.shape[1], False,
                      np.repeat(src.p, counts), np.repeat(src.i, counts), out_j,
                      np.repeat(src.v, counts) * out_bv)

    def rmatmul_dense(self, A: np.ndarray) -> "AffMat":
        """A @ self for dense A."""
        return self.T.matmul_dense(np.asarray(A, dtype=np.float64).T).T

    # -- evaluation --------------------------------------------------------

    def materialize(self, x: np.ndarray) -> np.ndarray:
        M = np.zeros((self.m, self.n))
        if len(self.p):
            x = np.asarray(x, dtype=np.float64)
            if x.size == 0:
                x = np.zeros(1)
            const = self.p < 0
            coeff = np.where(const, 1.0, x[np.where(const, 0, self.p)])
            np.add.at(M, (self.i, self.j), self.v * coeff)
        if self.sym:
            M = M + np.triu(M, 1).T
        return M

    def entry(self, i: int, j: int):
        """Affine form of entry (i, j): (const, [(param, coeff)]) with
        duplicate parameters merged."""
        if self.sym and i > j:
            i, j = j, i
        mask = (self.i == i) & (self.j == j)
        const = float(self.v[mask & (self.p < 0)].sum())
        coeffs: dict[int, float] = {}
        for p, v in zip(self.p[mask & (self.p >= 0)], self.v[mask & (self.p >= 0)]):
            coeffs[int(p)] = coeffs.get(int(p), 0.0) + float(v)
        return const, sorted(coeffs.items())

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.p < 0))


class BlockAcc:
    """Accumulates one symmetric PSD block on a segment grid."""

    def __init__(self, tag: str, seg_dims):
        self.tag = tag
        self.seg_dims = list(seg_dims)
        self.offsets = np.concatenate([[0], np.cumsum(self.seg_dims)]).astype(int)
        self.dim = int(self.offsets[-1])
        self._p, self._i, self._j, self._v = [], [], [], []

    def add(self, r: int, c: int, mat: AffMat, scale: float = 1.0,
            transpose: bool = False) -> None:
        """Place mat (or its transpose) at segment (r, c); (c, r) is implied."""
        if r > c or (r == c and transpose):
            r, c, transpose = c, r, not transpose
        mr, mc = (mat.n, mat.m) if transpose else (mat.m, mat.n)
        if mr != self.seg_dims[r] or mc != self.seg_dims[c]:
            raise AssemblyError(f"block {self.tag!r}: sub-matrix {mr}x{mc} does not fit "
                                f"segment ({self.seg_dims[r]}, {self.seg_dims[c]})")
        if r == c:
            if not mat.sym:
                raise AssemblyError(f"block {self.tag!r}: diagonal placement needs a "
                                    f"symmetric sub-matrix")
            src = mat
        else:
            src = mat.full()
        i_loc, j_loc = (src.j, src.i) if transpose else (src.i, src.j)
        self._p.append(src.p)
        self._i.append(i_loc + self.offsets[r])
        self._j.append(j_loc + self.offsets[c])
        self._v.append(src.v * scale)

    def emit(self, problem) -> None:
        if not self._p:
            problem.add_psd_block(self.tag, self.dim, ([], [], []), ([], [], [], []))
            return
        p = np.concatenate(self._p)
        i = np.concatenate(self._i)
        j = np.concatenate(self._j)
        v = np.concatenate(self._v)
        const = p < 0
        problem.add_psd_block(self.tag, self.dim,
                              (i[const], j[const], v[const]),
                              (p[~const], i[~const], j[~const], v[~const]))
