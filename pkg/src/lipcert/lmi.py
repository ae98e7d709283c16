"""Certificate planning and constraint assembly.

assemble_network turns a network plus a split policy into one conic problem:
minimize rho^2 subject to a PSD block (or linear rows) per subnetwork that
couples the value-function tiles on its two boundary interfaces.  The input
tile is pinned to rho^2 * I and the output tile to I, so sqrt(rho^2) is a
certified bound on the l2 Lipschitz constant.

Pooling and flattening act as identifications by default: instead of carrying
a separate tile plus an inequality, the planner expresses one boundary tile as
an affine view of the other (mu^2-scaling for pools, block repetition for
flatten) and eliminates the variable.  Every quadratic-in-variables term is
Schur-lifted, so each block stays linear in the parameters:

    M - L^T Q L >= 0  and  Q >= 0    <=>    [[M, L^T Q], [Q L, Q]] >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affine import AffMat, BlockAcc
from .conic import ConicProblem
from .errors import AssemblyError
from .network import (AvgPool, Conv1D, Conv2D, Flatten, FullyConnected, GroupSort,
                      MaxPool, Network, Residual, StateSpace, Unit, split_subnetworks,
                      trace_shapes)
from .roesser import realize_strided
from .spectral import pool_lipschitz
from .structures import DIAG, FREE, GROUP, Structure, meet

EPS_STRICT = 1e-8     # closed-cone margin standing in for strict positivity


# ---------------------------------------------------------------------------
# variable helpers


def _new_tile(problem: ConicProblem, name: str, structure: Structure, c: int,
              kind: str = "certificate") -> AffMat:
    info = problem.add_params(name, structure.nparams(c), kind, (structure, c))
    return AffMat.from_structure(info.offset, structure, c)


def _new_mult(problem: ConicProblem, name: str, c: int) -> AffMat:
    """Diagonal multiplier Lambda with lambda_k >= EPS_STRICT."""
    info = problem.add_params(name, c, "slack")
    for k in range(c):
        problem.add_nonneg(-EPS_STRICT, [(info.offset + k, 1.0)])
    return AffMat.diag_params(info.offset, c)


def _embed(mat: AffMat, dim: int, off: int) -> AffMat:
    return AffMat(dim, dim, True, mat.p, mat.i + off, mat.j + off, mat.v)


def _new_storage(problem: ConicProblem, name: str, state_blocks) -> AffMat | None:
    """Block-diagonal storage matrix P, one free PSD tile per state block.

    PSD-ness comes for free from the Schur lift that conjugates P.
    """
    n = int(sum(state_blocks))
    if n == 0:
        return None
    parts, off = [], 0
    for m, nb in enumerate(state_blocks):
        if nb:
            tile = _new_tile(problem, f"{name}.{m + 1}", Structure(FREE), nb)
            parts.append(_embed(tile, n, off))
        off += nb
    return AffMat(n, n, True, np.concatenate([t.p for t in parts]),
                  np.concatenate([t.i for t in parts]),
                  np.concatenate([t.j for t in parts]),
                  np.concatenate([t.v for t in parts]))


def _const_dense(expr: AffMat) -> np.ndarray:
    if not expr.is_constant:
        raise AssemblyError("expected a constant certificate expression")
    return expr.materialize(np.zeros(0))


def _combine(*parts):
    """Affine combination of (scale, (const, coeffs)) rows."""
    const = 0.0
    acc: dict[int, float] = {}
    for s, (c0, coeffs) in parts:
        const += s * c0
        for p, v in coeffs:
            acc[p] = acc.get(p, 0.0) + s * v
    return const, sorted(acc.items())


# ---------------------------------------------------------------------------
# per-subnetwork emitters


def _corner_splitters(problem, tag, N, dim):
    """N-1 free symmetric tiles whose sum is subtracted from the last clique.

    A constraint whose only off-tile coupling runs through one trailing corner
    (block-arrow sparsity) is PSD exactly when it splits into per-tile blocks
    [[tile_k, coupling_k], [., R_k]] with sum_k R_k equal to the corner; the
    sparsity graph is chordal with those blocks as cliques.  Splitting keeps
    the optimum but replaces one huge PSD block by N small ones.
    """
    return [_new_tile(problem, f"R[{tag}].{k}", Structure(FREE), dim, kind="splitter")
            for k in range(N - 1)]


def _clique_tiles(N, c, corner):
    """Tiles per clique for the block-arrow split, or 0 to keep one block.

    Clique dimension targets 1.5x the corner (the minimum of d^3 / (d - a),
    the per-sweep eigendecomposition work divided by the columns retired).
    The splitter variables measurably slow first-order convergence, so
    splitting must promise a large (8x) per-sweep win before it pays;
    marginal splits lose wall-clock time even when they cut flops.
    """
    g = max(1, round(corner / (2 * c)))
    n_cliques = -(-N // g)
    if n_cliques < 2 or n_cliques * (g * c + corner) ** 3 > 0.125 * (N * c + corner) ** 3:
        return 0
    return g


def _arrow_cliques(N, tile, g):
    """Group the repeated input tiles g at a time; yield (k, corner, cols)."""
    for k, start in enumerate(range(0, N, g)):
        n_here = min(g, N - start)
        corner = tile if n_here == 1 else tile.kron_eye(n_here)
        yield k, corner, slice(start * tile.m, (start + n_here) * tile.m)


def build_fc(problem, tag, W, Xin, Xout):
    """Bare linear layer: Xin - W^T Xout W >= 0, lifted when Xout varies."""
    c_out, c_in = W.shape
    g = _clique_tiles(Xin.kron[0], Xin.kron[1].m, c_out) if Xin.kron else 0
    if g:
        # lift unconditionally: [[Xin, W^T Xout], [., Xout]] is block-arrow
        # over the repeated input tiles, so it splits per column group
        N, tile = Xin.kron
        n_cliques = -(-N // g)
        rest = _corner_splitters(problem, tag, n_cliques, c_out)
        for k, corner, cols in _arrow_cliques(N, tile, g):
            acc = BlockAcc(f"{tag}:p{k}", [corner.m, c_out])
            acc.add(0, 0, corner)
            acc.add(1, 0, Xout.matmul_dense(W[:, cols]))
            if k < n_cliques - 1:
                acc.add(1, 1, rest[k])
            else:
                acc.add(1, 1, Xout)
                for R in rest:
                    acc.add(1, 1, R, scale=-1.0)
            acc.emit(problem)
        return
    if Xout.is_constant:
        acc = BlockAcc(tag, [c_in])
        acc.add(0, 0, Xin)
        acc.add(0, 0, AffMat.const(W.T @ _const_dense(Xout) @ W, sym=True), scale=-1.0)
    else:
        acc = BlockAcc(tag, [c_in, c_out])
        acc.add(0, 0, Xin)
        acc.add(1, 0, Xout.matmul_dense(W))
        acc.add(1, 1, Xout)
    acc.emit(problem)


def build_fc_act(problem, tag, W, Xin, Xout):
    """Linear layer followed by a slope-[0,1] activation; linear in all vars."""
    n_v, c_in = W.shape
    lam = _new_mult(problem, f"lam[{tag}]", n_v)
    g = _clique_tiles(Xin.kron[0], Xin.kron[1].m, n_v) if Xin.kron else 0
    if g:
        N, tile = Xin.kron
        n_cliques = -(-N // g)
        rest = _corner_splitters(problem, tag, n_cliques, n_v)
        for k, corner, cols in _arrow_cliques(N, tile, g):
            acc = BlockAcc(f"{tag}:p{k}", [corner.m, n_v])
            acc.add(0, 0, corner)
            acc.add(0, 1, lam.matmul_dense(W[:, cols]), transpose=True, scale=-1.0)
            if k < n_cliques - 1:
                acc.add(1, 1, rest[k])
            else:
                acc.add(1, 1, lam, scale=2.0)
                acc.add(1, 1, Xout, scale=-1.0)
                for R in rest:
                    acc.add(1, 1, R, scale=-1.0)
            acc.emit(problem)
        return
    acc = BlockAcc(tag, [c_in, n_v])
    acc.add(0, 0, Xin)
    acc.add(0, 1, lam.matmul_dense(W), transpose=True, scale=-1.0)
    acc.add(1, 1, lam, scale=2.0)
    acc.add(1, 1, Xout, scale=-1.0)
    acc.emit(problem)


def build_activation(problem, tag, Xin, Xout, c):
    lam = _new_mult(problem, f"lam[{tag}]", c)
    acc = BlockAcc(tag, [c, c])
    acc.add(0, 0, Xin)
    acc.add(0, 1, lam, scale=-1.0)
    acc.add(1, 1, lam, scale=2.0)
    acc.add(1, 1, Xout, scale=-1.0)
    acc.emit(problem)


def _build_state(problem, tag, A, B, C, D, state_blocks, Y, Xout):
    """Bare causal linear filter (realized convolution or state-space layer).

    Raw form blkdiag(P, Y) - [A B; C D]^T blkdiag(P, Xout) [A B; C D] >= 0
    with the conjugation lifted; memoryless constant case folds to build_fc.
    """
    n = int(sum(state_blocks))
    c_in, c_out = D.shape[1], D.shape[0]
    if n == 0 and Xout.is_constant:
        build_fc(problem, tag, D, Y, Xout)
        return
    P = _new_storage(problem, f"P[{tag}]", state_blocks)
    acc = BlockAcc(tag, [n, c_in, n, c_out])
    if P is not None:
        acc.add(0, 0, P)
        acc.add(2, 0, P.matmul_dense(A))
        acc.add(2, 1, P.matmul_dense(B))
        acc.add(2, 2, P)
        acc.add(3, 0, Xout.matmul_dense(C))
    acc.add(1, 1, Y)
    acc.add(3, 1, Xout.matmul_dense(D))
    acc.add(3, 3, Xout)
    acc.emit(problem)


def _build_state_act(problem, tag, A, B, C, D, state_blocks, Y, Xout):
    """Causal linear filter followed by an activation.

    Only P is conjugated, so the output tile enters linearly and trailing-pool
    scaling on Xout folds in as a view.
    """
    n = int(sum(state_blocks))
    c_in, c_v = D.shape[1], D.shape[0]
    lam = _new_mult(problem, f"lam[{tag}]", c_v)
    if n == 0:
        acc = BlockAcc(tag, [c_in, c_v])
        acc.add(0, 0, Y)
        acc.add(0, 1, lam.matmul_dense(D), transpose=True, scale=-1.0)
        acc.add(1, 1, lam, scale=2.0)
        acc.add(1, 1, Xout, scale=-1.0)
        acc.emit(problem)
        return
    P = _new_storage(problem, f"P[{tag}]", state_blocks)
    acc = BlockAcc(tag, [n, c_in, c_v, n])
    acc.add(0, 0, P)
    acc.add(1, 1, Y)
    acc.add(0, 2, lam.matmul_dense(C), transpose=True, scale=-1.0)
    acc.add(1, 2, lam.matmul_dense(D), transpose=True, scale=-1.0)
    acc.add(2, 2, lam, scale=2.0)
    acc.add(2, 2, Xout, scale=-1.0)
    acc.add(3, 0, P.matmul_dense(A))
    acc.add(3, 1, P.matmul_dense(B))
    acc.add(3, 3, P)
    acc.emit(problem)


def build_conv(problem, tag, model, Y, Xout):
    """Realized convolution block; Y is the (possibly reshaped) input tile."""
    _build_state(problem, tag, model.full_A(), model.full_B(), model.full_C(),
                 model.D, model.state_dims, Y, Xout)


def build_conv_act(problem, tag, model, Y, Xout):
    """Realized convolution followed by a slope-[0,1] activation."""
    _build_state_act(problem, tag, model.full_A(), model.full_B(), model.full_C(),
                     model.D, model.state_dims, Y, Xout)


def build_ssm(problem, tag, A, B, C, D, Xin, Xout):
    """1-D state-space layer given directly by its matrices."""
    _build_state(problem, tag, A, B, C, D, (A.shape[0],), Xin, Xout)


def build_ssm_act(problem, tag, A, B, C, D, Xin, Xout):
    _build_state_act(problem, tag, A, B, C, D, (A.shape[0],), Xin, Xout)


def build_groupsort(problem, tag, Xin, Xout, c, g):
    """Sorting layer: 0 <= Xout <= Xin inside the sorting cone.

    Tiles there are diag(lam) (x) I_g + diag(gam) (x) 11^T per group, with
    eigenvalues lam (multiplicity g-1) and lam + g*gam, so both PSD conditions
    reduce to linear rows in the tile entries.
    """
    for b in range(c // g):
        o = b * g
        a_out, a_in = Xout.entry(o, o), Xin.entry(o, o)
        if g == 1:
            problem.add_nonneg(*_combine((1.0, a_out)))
            problem.add_nonneg(*_combine((1.0, a_in), (-1.0, a_out)))
            continue
        b_out, b_in = Xout.entry(o, o + 1), Xin.entry(o, o + 1)
        # lam = diag - offdiag, lam + g*gam = diag + (g-1)*offdiag
        problem.add_nonneg(*_combine((1.0, a_out), (-1.0, b_out)))
        problem.add_nonneg(*_combine((1.0, a_out), (g - 1.0, b_out)))
        problem.add_nonneg(*_combine((1.0, a_in), (-1.0, b_in),
                                     (-1.0, a_out), (1.0, b_out)))
        problem.add_nonneg(*_combine((1.0, a_in), (g - 1.0, b_in),
                                     (-1.0, a_out), (-(g - 1.0), b_out)))


def build_avgpool(problem, tag, Xin, Xout, mu2, c):
    """0 <= mu^2 Xout <= Xin as two explicit PSD tiles."""
    acc = BlockAcc(f"{tag}:psd", [c])
    acc.add(0, 0, Xout)
    acc.emit(problem)
    acc = BlockAcc(tag, [c])
    acc.add(0, 0, Xin)
    acc.add(0, 0, Xout, scale=-mu2)
    acc.emit(problem)


def build_maxpool(problem, tag, Xin, Xout, mu2, c):
    """Diagonal certificates: 0 <= mu^2 lam_out <= lam_in per channel."""
    for k in range(c):
        problem.add_nonneg(*_combine((1.0, Xout.entry(k, k))))
        problem.add_nonneg(*_combine((1.0, Xin.entry(k, k)),
                                     (-mu2, Xout.entry(k, k))))


def build_flatten(problem, tag, Xin, Xout, N):
    acc = BlockAcc(tag, [N * Xin.m])
    acc.add(0, 0, Xin.kron_eye(N))
    acc.add(0, 0, Xout, scale=-1.0)
    acc.emit(problem)


def build_residual(problem, tag, W1, W2, Xin, Xout):
    """Skip connection y = u + W2 sigma(W1 u + b1) + b2 on a vector interface.

    Raw form M - L^T Xout L >= 0 with M = [[Xin, -W1^T Lam], [., 2 Lam]] and
    L = [I  W2]; folded when Xout is constant, lifted otherwise.
    """
    n_v, c = W1.shape
    lam = _new_mult(problem, f"lam[{tag}]", n_v)
    lamW1 = lam.matmul_dense(W1)
    if Xout.is_constant:
        Xd = _const_dense(Xout)
        acc = BlockAcc(tag, [c, n_v])
        acc.add(0, 0, Xin)
        acc.add(0, 0, AffMat.const(Xd, sym=True), scale=-1.0)
        acc.add(0, 1, lamW1, transpose=True, scale=-1.0)
        acc.add(0, 1, AffMat.const(Xd @ W2), scale=-1.0)
        acc.add(1, 1, lam, scale=2.0)
        acc.add(1, 1, AffMat.const(W2.T @ Xd @ W2, sym=True), scale=-1.0)
    else:
        acc = BlockAcc(tag, [c, n_v, c])
        acc.add(0, 0, Xin)
        acc.add(0, 1, lamW1, transpose=True, scale=-1.0)
        acc.add(1, 1, lam, scale=2.0)
        acc.add(2, 0, Xout)
        acc.add(2, 1, Xout.matmul_dense(W2))
        acc.add(2, 2, Xout)
    acc.emit(problem)


def build_deep_fc(problem, tag, weights, Xin, Xout, trailing_bare):
    """One banded block for a run of dense+activation layers.

    Rows (u, v_1..v_l): diagonal Xin, 2 Lam_1 .. 2 Lam_l - Xout, off-diagonal
    (v_j, v_j+1) = -W_{j+1}^T Lam_{j+1}.  A trailing bare dense layer turns the
    last diagonal into 2 Lam_l - W_L^T Xout W_L, lifted when Xout varies.
    """
    acts = weights[:-1] if trailing_bare else weights
    l = len(acts)
    if l == 0:
        raise AssemblyError(f"block {tag!r}: deep dense group needs at least one "
                            f"activation layer")
    segs = [acts[0].shape[1]] + [W.shape[0] for W in acts]
    lift = trailing_bare and not Xout.is_constant
    if lift:
        segs.append(weights[-1].shape[0])
    acc = BlockAcc(tag, segs)
    acc.add(0, 0, Xin)
    for j, W in enumerate(acts, start=1):
        lam = _new_mult(problem, f"lam[{tag}].{j}", W.shape[0])
        acc.add(j - 1, j, lam.matmul_dense(W), transpose=True, scale=-1.0)
        acc.add(j, j, lam, scale=2.0)
    if not trailing_bare:
        acc.add(l, l, Xout, scale=-1.0)
    elif lift:
        WL = weights[-1]
        acc.add(l + 1, l, Xout.matmul_dense(WL))
        acc.add(l + 1, l + 1, Xout)
    else:
        WL = weights[-1]
        acc.add(l, l, AffMat.const(WL.T @ _const_dense(Xout) @ WL, sym=True),
                scale=-1.0)
    acc.emit(problem)


def build_deep_conv(problem, tag, models, Xin, Xout):
    """One banded block for a run of stride-1 convolution+activation layers.

    Rows (u_0, x_1, v_1, ..., x_l, v_l) carry the input tile, per-layer storage
    P_j and multipliers; all storage conjugations share one bordered lift.
    """
    l = len(models)
    segs = [models[0].c_in]
    for md in models:
        segs += [md.n_total, md.c_out]
    segs += [md.n_total for md in models]
    acc = BlockAcc(tag, segs)
    acc.add(0, 0, Xin)
    for j, md in enumerate(models, start=1):
        xj, vj = 2 * j - 1, 2 * j
        vprev = 2 * (j - 1) if j > 1 else 0
        zj = 2 * l + j
        lam = _new_mult(problem, f"lam[{tag}].{j}", md.c_out)
        A, B, C, D = md.full_A(), md.full_B(), md.full_C(), md.D
        acc.add(vprev, vj, lam.matmul_dense(D), transpose=True, scale=-1.0)
        acc.add(vj, vj, lam, scale=2.0)
        P = _new_storage(problem, f"P[{tag}].{j}", md.state_dims)
        if P is not None:
            acc.add(xj, xj, P)
            acc.add(xj, vj, lam.matmul_dense(C), transpose=True, scale=-1.0)
            acc.add(zj, xj, P.matmul_dense(A))
            acc.add(zj, vprev, P.matmul_dense(B))
            acc.add(zj, zj, P)
    acc.add(2 * l, 2 * l, Xout, scale=-1.0)
    acc.emit(problem)


# ---------------------------------------------------------------------------
# planning


@dataclass
class AssemblyInfo:
    split: str
    pool_mode: str
    boundaries: list = field(default_factory=list)   # dicts: index/dim/role/...
    groups: list = field(default_factory=list)       # dicts: tag/kind/layers
    nparams: int = 0
    nblocks: int = 0
    nrows: int = 0


def _classify_unit(net: Network, unit: Unit) -> str:
    layer = net.layers[unit.layers[0]]
    if unit.kind == "linear":
        act = "_act" if unit.has_activation else ""
        if isinstance(layer, FullyConnected):
            return "fc" + act
        if isinstance(layer, (Conv1D, Conv2D)):
            return "conv" + act
        return "ssm" + act
    if unit.kind == "pool":
        return "maxpool" if isinstance(layer, MaxPool) else "avgpool"
    return unit.kind


def _deep_kind(net: Network, units: list[Unit]) -> str | None:
    layers = [net.layers[u.layers[0]] for u in units]
    if all(u.kind == "linear" for u in units):
        if all(isinstance(ly, FullyConnected) for ly in layers) and \
                all(u.has_activation for u in units[:-1]):
            return "deep_fc"
        conv_type = Conv1D if isinstance(layers[0], Conv1D) else Conv2D
        if all(isinstance(ly, conv_type) for ly in layers) and \
                all(u.has_activation for u in units) and \
                all(all(s == 1 for s in ly.stride) for ly in layers):
            return "deep_conv"
    return None


def _normalize_groups(net: Network, raw: list[list[Unit]]):
    """Keep multi-unit groups only when they merge into one banded block;
    other groups are assembled as chains of per-unit certificates, which has
    the same optimal value by splitting invariance."""
    groups, kinds = [], []
    for g in raw:
        deep = _deep_kind(net, g) if len(g) > 1 else None
        if deep:
            groups.append(g)
            kinds.append(deep)
        else:
            for u in g:
                groups.append([u])
                kinds.append(_classify_unit(net, u))
    return groups, kinds


def _boundary_reqs(kind: str, layer) -> tuple[Structure, Structure]:
    if kind == "groupsort":
        s = Structure(GROUP, layer.group_size) if layer.group_size > 1 else Structure(DIAG)
        return s, s
    if kind == "maxpool":
        return Structure(DIAG), Structure(DIAG)
    return Structure(FREE), Structure(FREE)


def _pullback(structure: Structure, c_left: int) -> Structure:
    """Tile structure induced on X when I_N (x) X must have the structure."""
    if structure.kind == FREE or structure.kind == DIAG:
        return structure
    if c_left % structure.group:
        raise AssemblyError(f"sorting group size {structure.group} straddles the "
                            f"flattened channel boundary (tile has {c_left} channels)")
    return structure


def _pure_rho_scale(expr: AffMat, rho: int) -> float:
    diag = (expr.i == expr.j) & (expr.p == rho)
    if not diag.all() or not len(expr.v):
        raise AssemblyError("input and output tiles are identified through a "
                            "non-scalar map; cannot close the certificate chain")
    scales = np.zeros(expr.m)
    np.add.at(scales, expr.i, expr.v)
    if not np.allclose(scales, scales[0], rtol=1e-12, atol=0.0):
        raise AssemblyError("identified input/output tiles disagree across channels")
    return float(scales[0])


def assemble_network(net: Network, split: str = "layer", pool_mode: str = "eq",
                     flatten_mode: str = "eq") -> tuple[ConicProblem, AssemblyInfo]:
    """Build the full conic program for one network and split policy."""
    if pool_mode not in ("eq", "ineq"):
        raise AssemblyError(f"unknown pool mode {pool_mode!r}")
    if flatten_mode not in ("eq", "ineq"):
        raise AssemblyError(f"unknown flatten mode {flatten_mode!r}")
    shapes = trace_shapes(net)
    groups, kinds = _normalize_groups(net, split_subnetworks(net, split))
    K = len(groups)
    b_iface = [shapes[g[0].layers[0]] for g in groups] + [shapes[-1]]
    dims = [f.channels for f in b_iface]

    # structure requirements contributed by the adjacent subnetworks
    reqs = [Structure(FREE) for _ in range(K + 1)]
    for gi, (group, kind) in enumerate(zip(groups, kinds)):
        r_in, r_out = _boundary_reqs(kind, net.layers[group[0].layers[0]])
        reqs[gi] = meet(reqs[gi], r_in)
        reqs[gi + 1] = meet(reqs[gi + 1], r_out)

    # identification edges (eq mode): boundary gi expressed through gi+1
    edges: list = [None] * K
    for gi, (group, kind) in enumerate(zip(groups, kinds)):
        layer = net.layers[group[0].layers[0]]
        if kind in ("avgpool", "maxpool") and pool_mode == "eq":
            mu = pool_lipschitz(layer, b_iface[gi])
            edges[gi] = ("pool", mu * mu)
        elif kind == "flatten" and flatten_mode == "eq":
            edges[gi] = ("flatten", b_iface[gi].positions)

    problem = ConicProblem()
    rho = problem.add_params("rho_sq", 1, "objective").offset
    problem.set_objective(rho)
    problem.add_nonneg(0.0, [(rho, 1.0)])

    info = AssemblyInfo(split=split, pool_mode=pool_mode)
    exprs: list[AffMat | None] = [None] * (K + 1)

    def _step_right(expr: AffMat, edge) -> AffMat:
        if edge[0] == "pool":
            return expr.scale(1.0 / edge[1])
        return expr.kron_eye(edge[1])

    a = 0
    while a <= K:
        b = a
        while b < K and edges[b] is not None:
            b += 1
        members = range(a, b + 1)
        rep_is_var = False
        if a == 0:
            exprs[0] = AffMat.eye_scaled(dims[0], 1.0, rho)
        elif b == K:
            cur = AffMat.eye_scaled(dims[K], 1.0)
            exprs[K] = cur
            for i in range(K - 1, a - 1, -1):
                kindE, val = edges[i]
                cur = cur.scale(val) if kindE == "pool" else cur.unkron_eye(val)
                exprs[i] = cur
        else:
            structure = reqs[a]
            seen_flatten = False
            for i in members:
                s_i = reqs[i]
                structure = meet(structure, _pullback(s_i, dims[a]) if seen_flatten else s_i)
                if i < b and edges[i][0] == "flatten":
                    seen_flatten = True
            structure.check_dim(dims[a])
            exprs[a] = _new_tile(problem, f"X{a}", structure, dims[a])
            rep_is_var = True
        if a == 0 or b < K:
            for i in range(a, b):
                exprs[i + 1] = _step_right(exprs[i], edges[i])
            if a == 0 and b == K:
                # the whole chain is identifications: the propagated input tile
                # alpha * rho^2 * I must dominate the identity output tile (the
                # sound side of the eliminated equalities); minimization makes
                # it tight
                alpha = _pure_rho_scale(exprs[K], rho)
                problem.add_nonneg(-1.0, [(rho, alpha)])
        for i in members:
            if i == 0:
                role = "input"
            elif i == K:
                role = "output"
            elif i == a and rep_is_var:
                role = "certificate"
            else:
                role = "view"
            info.boundaries.append({
                "index": i, "dim": dims[i], "role": role,
                "structure": structure.kind if role == "certificate" else None,
            })
        a = b + 1

    # emit one constraint bundle per subnetwork
    for gi, (group, kind) in enumerate(zip(groups, kinds)):
        tag = f"{kind}:g{gi}"
        layer0 = net.layers[group[0].layers[0]]
        Xin, Xout = exprs[gi], exprs[gi + 1]
        if kind in ("avgpool", "maxpool", "flatten") and edges[gi] is not None:
            info.groups.append({"tag": tag, "kind": kind, "mode": "eq",
                                "layers": [k for u in group for k in u.layers]})
            continue
        if kind in ("fc", "fc_act"):
            W = layer0.weight
            if kind == "fc":
                build_fc(problem, tag, W, Xin, Xout)
            else:
                build_fc_act(problem, tag, W, Xin, Xout)
        elif kind in ("conv", "conv_act"):
            rmap, model = realize_strided(layer0.kernel, None, layer0.stride)
            Y = Xin.kron_eye(rmap.copies) if rmap.copies > 1 else Xin
            emitter = build_conv if kind == "conv" else build_conv_act
            emitter(problem, tag, model, Y, Xout)
        elif kind in ("ssm", "ssm_act"):
            emitter = build_ssm if kind == "ssm" else build_ssm_act
            emitter(problem, tag, layer0.A, layer0.B, layer0.C, layer0.D, Xin, Xout)
        elif kind == "activation":
            build_activation(problem, tag, Xin, Xout, dims[gi])
        elif kind == "groupsort":
            build_groupsort(problem, tag, Xin, Xout, dims[gi], layer0.group_size)
        elif kind == "avgpool":
            mu = pool_lipschitz(layer0, b_iface[gi])
            build_avgpool(problem, tag, Xin, Xout, mu * mu, dims[gi])
        elif kind == "maxpool":
            mu = pool_lipschitz(layer0, b_iface[gi])
            build_maxpool(problem, tag, Xin, Xout, mu * mu, dims[gi])
        elif kind == "flatten":
            build_flatten(problem, tag, Xin, Xout, b_iface[gi].positions)
        elif kind == "residual":
            inner = layer0.inner.layers
            if len(inner) != 3 or not isinstance(inner[0], FullyConnected) \
                    or not isinstance(inner[2], FullyConnected):
                raise AssemblyError("only single-hidden-layer residual paths are "
                                    "supported (dense, activation, dense)")
            build_residual(problem, tag, inner[0].weight, inner[2].weight, Xin, Xout)
        elif kind == "deep_fc":
            weights = [net.layers[u.layers[0]].weight for u in group]
            build_deep_fc(problem, tag, weights, Xin, Xout,
                         trailing_bare=not group[-1].has_activation)
        elif kind == "deep_conv":
            models = [realize_strided(net.layers[u.layers[0]].kernel, None,
                                      net.layers[u.layers[0]].stride)[1] for u in group]
            build_deep_conv(problem, tag, models, Xin, Xout)
        else:
            raise AssemblyError(f"no constraint builder for subnetwork kind {kind!r}")
        info.groups.append({"tag": tag, "kind": kind, "mode": "block",
                            "layers": [k for u in group for k in u.layers]})

    info.nparams = problem.nparams
    info.nblocks = len(problem.blocks)
    info.nrows = len(problem.nonneg)
    return problem, info
