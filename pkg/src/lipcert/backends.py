"""Adapters turning a ConicProblem into solver-native cone data.

Both supported backends solve  min c'x  s.t.  Ax + s = b,  s in K,  so a
constraint block G(x) = C + sum_p x_p A_p >= 0 becomes

    s = svec(C) - sum_p x_p svec(A_p)  in the PSD cone,

i.e. b-slice = svec(C) and A-column p = -svec(A_p).  The two solvers vectorize
symmetric matrices differently:

    clarabel  upper triangle, column-major, off-diagonals scaled by sqrt(2)
    scs       lower triangle, column-major, off-diagonals scaled by sqrt(2)

Nonnegativity rows (const + sum coeff x >= 0) go into the elementwise cone
placed before the PSD cones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import SolveError

_SQRT2 = np.sqrt(2.0)


def svec_index_upper(i, j, dim):
    """Position of upper-triangle entry (i <= j) in column-major svec order."""
    return j * (j + 1) // 2 + i


def svec_index_lower(i, j, dim):
    """Position of entry (i <= j) viewed as lower-triangle (j, i), column-major."""
    return i * dim - i * (i - 1) // 2 + (j - i)


def svec_len(dim):
    return dim * (dim + 1) // 2


@dataclass
class RawResult:
    status: str            # optimal | near-optimal | infeasible | failed
    x: np.ndarray | None
    iterations: int | None
    message: str


# Clarabel assembles a dense svec(d) x svec(d) scaling block per PSD cone
# into its KKT system; ~48 bytes per entry covers the triplet buffers, the
# CSC copy and factor fill observed empirically.  Beyond the budget the
# allocation aborts the whole process from native code, so it must be
# refused up front rather than attempted.
_CLARABEL_BYTES_PER_ENTRY = 48.0


def clarabel_kkt_bytes(block_dims) -> int:
    return int(sum(float(svec_len(d)) ** 2 * _CLARABEL_BYTES_PER_ENTRY
                   for d in block_dims))


def _memory_budget() -> int:
    try:
        with open("/proc/meminfo") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024 * 4 // 5
    except OSError:
        pass
    return 2_000_000_000


# Interior-point cost grows like svec(dim)^2 per block (dense scaling
# kernel), so past this block size the first-order backend is faster by an
# order of magnitude even when the KKT system would fit in memory.
_CLARABEL_MAX_BLOCK = 48


def clarabel_fits(problem) -> bool:
    """Whether the interior-point backend is usable: every PSD block small
    enough for its dense scaling kernel, and the KKT system within memory."""
    dims = [blk.dim for blk in problem.blocks]
    return max(dims, default=0) <= _CLARABEL_MAX_BLOCK and \
        clarabel_kkt_bytes(dims) <= _memory_budget()


def choose_backend(problem, solver: str) -> str:
    """Resolve 'auto' for a single-shot solve: interior-point where it fits
    (reliable iteration counts, ~machine precision), first-order otherwise."""
    if solver in ("clarabel", "scs"):
        return solver
    if solver != "auto":
        raise SolveError(f"unknown solver backend {solver!r} "
                         f"(supported: auto, clarabel, scs)")
    return "clarabel" if clarabel_fits(problem) else "scs"


def _cone_data(problem, svec_index):
    """(A, b, q, n_nonneg, block_dims) in the shared geometry."""
    rows, cols, vals = [], [], []
    b_parts = []
    offset = 0

    for r, (const, coeffs) in enumerate(problem.nonneg):
        for p, c in coeffs:
            rows.append(r)
            cols.append(p)
            vals.append(-c)
        b_parts.append(const)
    offset = len(problem.nonneg)
    b = np.zeros(offset + sum(svec_len(blk.dim) for blk in problem.blocks))
    b[:offset] = b_parts

    row_arrays = [np.asarray(rows, dtype=np.int64)]
    col_arrays = [np.asarray(cols, dtype=np.int64)]
    val_arrays = [np.asarray(vals, dtype=np.float64)]

    for blk in problem.blocks:
        scale_c = np.where(blk.const_i == blk.const_j, 1.0, _SQRT2)
        idx_c = offset + svec_index(blk.const_i, blk.const_j, blk.dim)
        np.add.at(b, idx_c.astype(np.int64), blk.const_v * scale_c)
        scale_t = np.where(blk.term_i == blk.term_j, 1.0, _SQRT2)
        row_arrays.append(offset + svec_index(blk.term_i, blk.term_j, blk.dim))
        col_arrays.append(blk.term_p)
        val_arrays.append(-blk.term_v * scale_t)
        offset += svec_len(blk.dim)

    A = sparse.coo_matrix(
        (np.concatenate(val_arrays),
         (np.concatenate(row_arrays).astype(np.int64), np.concatenate(col_arrays).astype(np.int64))),
        shape=(offset, problem.nparams),
    ).tocsc()
    q = np.zeros(problem.nparams)
    q[problem.objective_param] = 1.0
    return A, b, q, len(problem.nonneg), [blk.dim for blk in problem.blocks]


def _solve_clarabel(problem, tol, max_iter, time_limit, verbose):
    import clarabel

    need = clarabel_kkt_bytes(blk.dim for blk in problem.blocks)
    budget = _memory_budget()
    if need > budget:
        raise SolveError(
            f"problem needs ~{need / 1e9:.1f} GB for the interior-point KKT "
            f"system (budget {budget / 1e9:.1f} GB); use solver='scs' or 'auto'")
    A, b, q, n_nonneg, dims = _cone_data(problem, svec_index_upper)
    cones = []
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))
    cones.extend(clarabel.PSDTriangleConeT(d) for d in dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iter
    if time_limit is not None:
        settings.time_limit = float(time_limit)
    P = sparse.csc_matrix((problem.nparams, problem.nparams))
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=np.float64)
    if status == "Solved":
        return RawResult("optimal", x, sol.iterations, status)
    if status == "AlmostSolved":
        return RawResult("near-optimal", x, sol.iterations, status)
    if "PrimalInfeasible" in status:
        return RawResult("infeasible", None, sol.iterations, status)
    return RawResult("failed", None, sol.iterations, status)


def _solve_scs(problem, tol, max_iter, time_limit, verbose):
    import scs

    A, b, q, n_nonneg, dims = _cone_data(problem, svec_index_lower)
    cone = {}
    if n_nonneg:
        cone["l"] = n_nonneg
    if dims:
        cone["s"] = dims
    kw = {}
    if time_limit is not None:
        kw["time_limit_secs"] = float(time_limit)
    solver = scs.SCS(dict(A=A, b=b, c=q), cone, verbose=verbose,
                     eps_abs=tol, eps_rel=tol,
                     max_iters=max(max_iter * 500, 10000), **kw)
    sol = solver.solve()
    status = sol["info"]["status"]
    iters = sol["info"].get("iter")
    if status == "solved":
        return RawResult("optimal", np.asarray(sol["x"]), iters, status)
    if "inaccurate" in status and "solved" in status:
        return RawResult("near-optimal", np.asarray(sol["x"]), iters, status)
    if "infeasible" in status:
        return RawResult("infeasible", None, iters, status)
    return RawResult("failed", None, iters, status)


def solve_cone(problem, solver="auto", tol=1e-6, max_iter=200,
               time_limit=None, verbose=False) -> RawResult:
    solver = choose_backend(problem, solver)
    if solver == "clarabel":
        return _solve_clarabel(problem, tol, max_iter, time_limit, verbose)
    return _solve_scs(problem, tol, max_iter, time_limit, verbose)
