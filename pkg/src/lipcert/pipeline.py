"""End-to-end certification: assemble, solve, independently verify, report."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .conic import SolveResult, solve
from .lmi import AssemblyInfo, assemble_network
from .network import (Conv1D, Conv2D, FullyConnected, Interface, Network,
                      StateSpace, trace_shapes)
from .spectral import operator_norm


def reduce_input(net: Network) -> tuple[Network, int | None]:
    """Replace a fat first dense layer W by W Q, Q an orthonormal basis of
    row(W), shrinking the input interface to the output width.

    This is exact: differences through the network depend on the input
    difference d only through W d, and for any d the projection onto row(W)
    has no larger norm and the same image, so the Lipschitz constant is
    unchanged (and so is the certificate problem, by the same congruence).
    Returns the original input dimension when the rewrite applied, else None.
    """
    if not net.layers or not isinstance(net.layers[0], FullyConnected):
        return net, None
    first = net.layers[0]
    n_in = net.input.total_dim
    if net.input.signal_dims != 0 or first.weight.shape[0] >= n_in:
        return net, None
    # economy QR of W^T: W^T = Q R  =>  W Q = R^T, singular values preserved
    _, r = np.linalg.qr(first.weight.T)
    layers = [replace(first, weight=r.T)] + list(net.layers[1:])
    return Network(Interface(0, r.shape[0]), layers), n_in


def equilibrate(net: Network) -> tuple[Network, float]:
    """Rescale every top-level weighted layer to unit operator norm.

    Returns the rescaled network and the product of the norms divided out.
    The bound of the original network is exactly that product times the
    bound of the rescaled one: scaling one layer's weight by a > 0 scales
    the whole constant by a (the certificate set maps onto itself under a
    congruence), and biases ride along so the rescaled network computes the
    original function divided by the product.  Layers inside residual
    branches are left alone -- the skip connection pins their scale.
    """
    out, factor, shape = [], 1.0, net.input
    for layer, iface in zip(net.layers, trace_shapes(net)):
        if isinstance(layer, (FullyConnected, Conv1D, Conv2D, StateSpace)):
            s, _ = operator_norm(layer, shape)   # any positive scale is exact
            if s > 0.0 and abs(s - 1.0) > 1e-12:
                if isinstance(layer, FullyConnected):
                    layer = replace(layer, weight=layer.weight / s, bias=layer.bias / s)
                elif isinstance(layer, (Conv1D, Conv2D)):
                    layer = replace(layer, kernel=layer.kernel / s, bias=layer.bias / s)
                else:
                    layer = replace(layer, C=layer.C / s, D=layer.D / s, g=layer.g / s)
                factor *= s
        out.append(layer)
        shape = iface
    return Network(net.input, out), factor


@dataclass
class BoundReport:
    gamma: float | None
    status: str                 # optimal | near-optimal | numerical-failure
    certified: bool
    solver: str
    tol: float
    split: str
    pool_mode: str
    result: SolveResult
    info: AssemblyInfo
    problem: object             # ConicProblem, kept for export / re-checks
    normalization: float = 1.0  # weight product divided out before solving
    reduced_input: int | None = None   # original input dim, if rewritten

    def to_json(self) -> dict:
        res = self.result
        return {
            "gamma": self.gamma,
            "status": self.status,
            "certified": self.certified,
            "solver": self.solver,
            "solver_tol": self.tol,
            "split": self.split,
            "pool_mode": self.pool_mode,
            "normalization": self.normalization,
            "reduced_input": self.reduced_input,
            "objective": res.objective * self.normalization ** 2,
            "iterations": res.iterations,
            "solve_time_s": res.solve_time,
            "message": res.message,
            "verification": {
                "block_min_eig": [r[0] for r in res.block_residuals],
                "block_tolerance": [r[1] for r in res.block_residuals],
                "nonneg_min": res.nonneg_min,
            },
            "assembly": {
                "parameters": self.info.nparams,
                "psd_blocks": self.info.nblocks,
                "nonneg_rows": self.info.nrows,
                "boundaries": self.info.boundaries,
                "subnetworks": self.info.groups,
            },
        }


def certify(net: Network, split: str = "layer", solver: str = "auto",
            tol: float = 1e-6, max_iter: int = 200, pool_mode: str = "eq",
            normalize: bool = True, reduce: bool = True,
            time_limit: float | None = 600.0, verbose: bool = False) -> BoundReport:
    """Certified upper bound on the l2 Lipschitz constant of the network.

    The returned gamma is trusted only when certified is True: the solver's
    certificate was re-checked with a plain eigensolver at the slightly
    inflated objective, independent of solver internals.

    Two exact rewrites precede assembly (both on by default, both leaving
    the bound of the original network unchanged): reduce projects a fat
    first dense layer onto its row space, and normalize divides each
    weighted layer by its operator norm so the solver works on O(1) data.
    time_limit caps the solve in wall-clock seconds; hitting it surfaces as
    an uncertified status, never as a silently weaker bound.
    """
    trace_shapes(net)   # surface model errors before any heavy work
    reduced = None
    if reduce:
        net, reduced = reduce_input(net)
    factor = 1.0
    if normalize:
        net, factor = equilibrate(net)
    problem, info = assemble_network(net, split=split, pool_mode=pool_mode)
    result = solve(problem, solver=solver, tol=tol, max_iter=max_iter,
                   time_limit=time_limit, verbose=verbose)
    return BoundReport(
        gamma=None if result.gamma is None else result.gamma * factor,
        status=result.status,
        certified=result.certified,
        solver=result.solver or solver,
        tol=tol,
        split=split,
        pool_mode=pool_mode,
        result=result,
        info=info,
        problem=problem,
        normalization=factor,
        reduced_input=reduced,
    )
