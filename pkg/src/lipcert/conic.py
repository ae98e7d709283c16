"""Solver-neutral conic program: scalar parameter vector, PSD constraint
blocks affine in the parameters, and elementwise nonnegativity rows.

Parameter 0 is always the squared Lipschitz bound being minimized.  Matrix
entries are stored for the upper triangle only (i <= j), with the value
meaning M[i,j] = M[j,i] = v; duplicate (i, j) entries accumulate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AssemblyError, InfeasibleError, SolveError

EPS_FEAS_SCALE = 1e-6          # block residual tolerance: 1e-6 * (1 + |G|)
GAMMA_RECERT_INFLATION = 1e-6  # re-check feasibility at gamma * (1 + this)


@dataclass(frozen=True)
class VarInfo:
    name: str
    offset: int
    nparams: int
    kind: str = "slack"           # "certificate" | "slack" | "objective"
    meta: object = None           # e.g. (Structure, tile dim) for certificates


@dataclass
class PSDBlock:
    tag: str
    dim: int
    const_i: np.ndarray
    const_j: np.ndarray
    const_v: np.ndarray
    term_p: np.ndarray
    term_i: np.ndarray
    term_j: np.ndarray
    term_v: np.ndarray

    def materialize(self, x: np.ndarray) -> np.ndarray:
        U = np.zeros((self.dim, self.dim))
        if len(self.const_i):
            np.add.at(U, (self.const_i, self.const_j), self.const_v)
        if len(self.term_p):
            np.add.at(U, (self.term_i, self.term_j), self.term_v * x[self.term_p])
        return U + np.triu(U, 1).T


def _as_idx(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64).reshape(-1)


class ConicProblem:
    def __init__(self):
        self.vars: list[VarInfo] = []
        self._by_name: dict[str, VarInfo] = {}
        self.nparams = 0
        self.blocks: list[PSDBlock] = []
        self.nonneg: list[tuple[float, tuple[tuple[int, float], ...]]] = []
        self.objective_param: int | None = None

    # -- declaration ------------------------------------------------------

    def add_params(self, name: str, n: int, kind: str = "slack", meta=None) -> VarInfo:
        if name in self._by_name:
            raise AssemblyError(f"variable {name!r} declared twice")
        if n < 0:
            raise AssemblyError(f"variable {name!r} has negative size {n}")
        info = VarInfo(name, self.nparams, n, kind, meta)
        self.vars.append(info)
        self._by_name[name] = info
        self.nparams += n
        return info

    def var(self, name: str) -> VarInfo:
        return self._by_name[name]

    def set_objective(self, p: int) -> None:
        self.objective_param = p

    def add_psd_block(self, tag: str, dim: int, const, terms) -> None:
        ci, cj, cv = (_as_idx(const[0]), _as_idx(const[1]),
                      np.asarray(const[2], dtype=np.float64).reshape(-1))
        tp, ti, tj, tv = (_as_idx(terms[0]), _as_idx(terms[1]), _as_idx(terms[2]),
                          np.asarray(terms[3], dtype=np.float64).reshape(-1))
        if np.any(ci > cj) or np.any(ti > tj):
            raise AssemblyError(f"block {tag!r}: entries must be upper-triangular")
        for arr in (ci, cj, ti, tj):
            if len(arr) and (arr.min() < 0 or arr.max() >= dim):
                raise AssemblyError(f"block {tag!r}: entry index out of range for dim {dim}")
        if len(tp) and (tp.min() < 0 or tp.max() >= self.nparams):
            raise AssemblyError(f"block {tag!r}: references undeclared parameter")
        self.blocks.append(PSDBlock(tag, dim, ci, cj, cv, tp, ti, tj, tv))

    def add_nonneg(self, const: float, coeffs) -> None:
        coeffs = tuple((int(p), float(c)) for p, c in coeffs if c != 0.0)
        for p, _ in coeffs:
            if p < 0 or p >= self.nparams:
                raise AssemblyError("nonnegativity row references undeclared parameter")
        self.nonneg.append((float(const), coeffs))

    # -- evaluation -------------------------------------------------------

    def nonneg_margins(self, x: np.ndarray) -> np.ndarray:
        return np.array([const + sum(c * x[p] for p, c in coeffs)
                         for const, coeffs in self.nonneg])

    def block_residuals(self, x: np.ndarray,
                        eps: float = EPS_FEAS_SCALE) -> list[tuple[float, float]]:
        """Per block: (minimum eigenvalue, tolerance eps * (1 + spectral size))."""
        out = []
        for b in self.blocks:
            eigs = np.linalg.eigvalsh(b.materialize(x))
            scale = max(abs(eigs[0]), abs(eigs[-1]))
            out.append((float(eigs[0]), eps * (1.0 + scale)))
        return out


def _block_row_scaling(block: PSDBlock, sweeps: int = 3) -> np.ndarray:
    """Diagonal d > 0 roughly equalizing row magnitudes of the block.

    Works on the magnitude profile |const| + sum_p |coeff_p| (the shape of
    the block for generic parameter values) with Ruiz-style iterations:
    d <- d / sqrt(rownorm).  The scaled block D B D has balanced rows, which
    first-order cone solvers like much better than the raw state-space
    lifts, whose rows span orders of magnitude.
    """
    d = np.ones(block.dim)
    i = np.concatenate([block.const_i, block.term_i])
    j = np.concatenate([block.const_j, block.term_j])
    v = np.abs(np.concatenate([block.const_v, block.term_v]))
    for _ in range(sweeps):
        w = v * d[i] * d[j]
        row = np.zeros(block.dim)
        np.maximum.at(row, i, w)
        np.maximum.at(row, j, w)
        row[row == 0.0] = 1.0
        d /= np.sqrt(row)
        d /= d.max()   # fix the overall scale, keep only the profile
    return d


def preconditioned_copy(problem: ConicProblem) -> ConicProblem:
    """Congruence-scaled copy: every PSD block B becomes D B D with D the
    Ruiz scaling above, every nonnegativity row is normalized to unit
    largest coefficient.  Both transforms preserve the feasible set and the
    parameter vector exactly, so a solution of the copy is a solution of
    the original (verification always runs against the original)."""
    out = ConicProblem()
    out.vars = problem.vars
    out._by_name = problem._by_name
    out.nparams = problem.nparams
    out.objective_param = problem.objective_param
    for b in problem.blocks:
        d = _block_row_scaling(b)
        out.blocks.append(PSDBlock(
            b.tag, b.dim,
            b.const_i, b.const_j, b.const_v * d[b.const_i] * d[b.const_j],
            b.term_p, b.term_i, b.term_j, b.term_v * d[b.term_i] * d[b.term_j]))
    for const, coeffs in problem.nonneg:
        top = max([abs(c) for _, c in coeffs], default=0.0)
        s = 1.0 / top if top > 0.0 else 1.0
        out.nonneg.append((const * s, tuple((p, c * s) for p, c in coeffs)))
    return out


@dataclass
class SolveResult:
    status: str                               # optimal | near-optimal | numerical-failure
    gamma: float | None
    x: np.ndarray | None
    objective: float | None
    block_residuals: list[tuple[float, float]] = field(default_factory=list)
    nonneg_min: float | None = None
    solve_time: float = 0.0
    solver: str = ""
    iterations: int | None = None
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def verify_solution(problem: ConicProblem, x: np.ndarray,
                    inflate_objective: bool = True,
                    eps: float = EPS_FEAS_SCALE) -> tuple[list, float, np.ndarray]:
    """Independent feasibility check (LAPACK eigensolver, no solver data).

    The objective parameter is inflated to the re-certification point
    (gamma * (1 + 1e-6))^2 first; blocks are monotone in it, so passing the
    check certifies the inflated bound.  eps sets the per-block tolerance;
    it is floored at EPS_FEAS_SCALE and normally tracks the solver tolerance
    (a first-order backend run at 1e-4 cannot be graded against 1e-8).
    """
    xc = np.array(x, dtype=np.float64)
    if inflate_objective and problem.objective_param is not None:
        p = problem.objective_param
        gamma = np.sqrt(max(xc[p], 0.0))
        xc[p] = (gamma * (1.0 + GAMMA_RECERT_INFLATION)) ** 2
    residuals = problem.block_residuals(xc, eps=max(eps, EPS_FEAS_SCALE))
    margins = problem.nonneg_margins(xc)
    nonneg_min = float(margins.min()) if len(margins) else 0.0
    return residuals, nonneg_min, xc


def _certify_raw(problem: ConicProblem, raw, solver: str, elapsed: float,
                 tol: float = EPS_FEAS_SCALE) -> SolveResult:
    """Re-check a backend's certificate and grade the outcome.

    optimal: backend converged and the certificate passes the eigenvalue
    re-check at the requested tolerance.  near-optimal: the backend at least
    reached its loose stopping state and the certificate passes at 100x the
    tolerance (still an explicit, verified margin).  Anything else is a
    numerical failure and carries no gamma.
    """
    if raw.status == "infeasible":
        raise InfeasibleError(
            "problem is primal infeasible; a Lipschitz bound always exists for the "
            "supported layer types, so this indicates an inconsistent assembly",
            result=SolveResult("numerical-failure", None, None, None, solve_time=elapsed,
                               solver=solver, message=raw.message))
    if raw.x is None:
        return SolveResult("numerical-failure", None, None, None, solve_time=elapsed,
                           solver=solver, iterations=raw.iterations, message=raw.message)

    x = np.asarray(raw.x, dtype=np.float64)
    obj = float(x[problem.objective_param])
    gamma = float(np.sqrt(max(obj, 0.0)))
    eps = max(tol, EPS_FEAS_SCALE)
    residuals, nonneg_min, _ = verify_solution(problem, x, eps=eps)
    nonneg_ok = nonneg_min >= -eps * (1.0 + abs(nonneg_min))
    strict = all(lam >= -tol_b for lam, tol_b in residuals) and nonneg_ok
    loose = all(lam >= -100.0 * tol_b for lam, tol_b in residuals) and \
        nonneg_min >= -100.0 * eps * (1.0 + abs(nonneg_min))
    if raw.status == "optimal" and strict:
        status = "optimal"
    elif raw.status in ("optimal", "near-optimal") and loose:
        status = "near-optimal"
    else:
        status = "numerical-failure"
    certified = status != "numerical-failure"
    return SolveResult(status, gamma if certified else None, x, obj, residuals, nonneg_min,
                       elapsed, solver, raw.iterations, raw.message)


_STATUS_RANK = {"optimal": 0, "near-optimal": 1, "numerical-failure": 2}


def solve(problem: ConicProblem, solver: str = "auto", tol: float = 1e-6,
          max_iter: int = 200, time_limit: float | None = None,
          precondition: bool = True, verbose: bool = False) -> SolveResult:
    """Solve, then verify the returned certificate independently.

    The backend sees a congruence-preconditioned copy of the blocks (exact,
    parameters unchanged); verification always runs against the problem as
    given here.

    'auto' tries the first-order backend (memory-flat, fast on the large
    structured problems) and, when every block is small enough for the
    interior-point backend's dense scaling kernel, escalates to it if the
    first attempt does not come back optimal -- a small minority of small
    problems stall first-order methods at any tolerance.

    Primal infeasibility raises InfeasibleError: a Lipschitz bound always
    exists for supported networks, so an infeasible assembly is a bug, never
    an answer.  Other backend failures come back as status numerical-failure.
    """
    from . import backends

    if problem.objective_param is None:
        raise AssemblyError("problem has no objective")
    if solver == "auto":
        attempts = ["scs", "clarabel"] if backends.clarabel_fits(problem) else ["scs"]
    else:
        attempts = [backends.choose_backend(problem, solver)]
    scaled = preconditioned_copy(problem) if precondition else problem

    outcomes: list[SolveResult] = []
    for i, backend in enumerate(attempts):
        rescue_left = i + 1 < len(attempts)
        # keep a stalling first-order attempt short when a rescue exists
        cap = min(max_iter, 40) if backend == "scs" and rescue_left else max_iter
        t0 = time.perf_counter()
        try:
            raw = backends.solve_cone(scaled, solver=backend, tol=tol, max_iter=cap,
                                      time_limit=time_limit, verbose=verbose)
        except SolveError:
            raise
        except Exception as e:   # backend blew up: report, do not crash the pipeline
            outcomes.append(SolveResult("numerical-failure", None, None, None,
                                        solve_time=time.perf_counter() - t0, solver=backend,
                                        message=f"backend error: {e}"))
            continue
        try:
            outcomes.append(_certify_raw(problem, raw, backend,
                                         time.perf_counter() - t0, tol=tol))
        except InfeasibleError:
            if rescue_left:
                continue
            raise
        if outcomes[-1].status == "optimal":
            return outcomes[-1]
    return min(outcomes, key=lambda r: _STATUS_RANK[r.status])
