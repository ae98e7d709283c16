"""SDPA sparse-format (.dat-s) export and import.

The format encodes  min c'x  s.t.  sum_k x_k F_k - F_0  PSD and block
diagonal, one line "k block i j value" per upper-triangle nonzero, with a
negative block size marking the elementwise-nonnegative block.  Our problems
map directly: F_0 holds the negated constant parts, F_k the coefficient of
parameter k.  The exporter writes an index-map JSON next to the file naming
each block's originating constraint so external solver output can be traced
back to subnetworks.
"""

from __future__ import annotations

import json

import numpy as np

from .conic import ConicProblem
from .errors import AssemblyError


def _coalesce(entries):
    acc: dict[tuple, float] = {}
    for key, v in entries:
        acc[key] = acc.get(key, 0.0) + v
    return {k: v for k, v in acc.items() if v != 0.0}


def export_sdpa(problem: ConicProblem, path, write_index_map: bool = True) -> None:
    if problem.objective_param is None:
        raise AssemblyError("cannot export a problem without an objective")
    path = str(path)
    has_lp = bool(problem.nonneg)
    struct = ([-len(problem.nonneg)] if has_lp else []) + \
        [b.dim for b in problem.blocks]
    c = np.zeros(problem.nparams)
    c[problem.objective_param] = 1.0

    entries = []   # ((matrix k, block, i, j), value) with 1-based indices
    if has_lp:
        for r, (const, coeffs) in enumerate(problem.nonneg, start=1):
            if const:
                entries.append(((0, 1, r, r), -const))
            for p, v in coeffs:
                entries.append(((p + 1, 1, r, r), v))
    base = 1 + int(has_lp)
    for bi, blk in enumerate(problem.blocks):
        b = base + bi
        for i, j, v in zip(blk.const_i, blk.const_j, blk.const_v):
            entries.append(((0, b, int(i) + 1, int(j) + 1), -float(v)))
        for p, i, j, v in zip(blk.term_p, blk.term_i, blk.term_j, blk.term_v):
            entries.append(((int(p) + 1, b, int(i) + 1, int(j) + 1), float(v)))

    with open(path, "w") as fh:
        fh.write('"minimize the squared certified bound; variable 1-based index '
                 f'{problem.objective_param + 1} is the objective\n')
        fh.write(f"{problem.nparams}\n{len(struct)}\n")
        fh.write(" ".join(str(s) for s in struct) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in c) + "\n")
        for (k, b, i, j), v in sorted(_coalesce(entries).items()):
            fh.write(f"{k} {b} {i} {j} {v:.17g}\n")

    if write_index_map:
        blocks = [{"sdpa_block": 1, "dim": -len(problem.nonneg),
                   "tag": "elementwise-nonneg"}] if has_lp else []
        blocks += [{"sdpa_block": base + bi, "dim": blk.dim, "tag": blk.tag}
                   for bi, blk in enumerate(problem.blocks)]
        with open(path + ".map.json", "w") as fh:
            json.dump({
                "format": "lipcert-sdpa-map/1",
                "objective_param": problem.objective_param + 1,
                "params": [{"name": v.name, "offset": v.offset + 1,
                            "count": v.nparams, "kind": v.kind}
                           for v in problem.vars],
                "blocks": blocks,
            }, fh, indent=1)


def _data_tokens(path):
    """Token stream of the numeric part, comments and decorations stripped."""
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if not s or s[0] in '"*':
                continue
            for ch in "{}(),":
                s = s.replace(ch, " ")
            yield from s.split()


def read_sdpa(path) -> ConicProblem:
    """Parse a .dat-s file back into a conic problem.

    The objective must be a single unit-coefficient variable (always true for
    exported problems); anything else is not a bound-certification SDP.
    """
    toks = _data_tokens(path)
    try:
        m = int(next(toks))
        nblocks = int(next(toks))
        struct = [int(next(toks)) for _ in range(nblocks)]
        c = np.array([float(next(toks)) for _ in range(m)])
        rows = []
        while True:
            try:
                k = int(next(toks))
            except StopIteration:
                break
            b, i, j, v = int(next(toks)), int(next(toks)), int(next(toks)), \
                float(next(toks))
            rows.append((k, b, i, j, v))
    except (StopIteration, ValueError) as e:
        raise AssemblyError(f"malformed SDPA file {path}: {e}") from None

    nz = np.nonzero(c)[0]
    if len(nz) != 1 or c[nz[0]] != 1.0:
        raise AssemblyError("SDPA objective is not a single squared-bound variable")

    problem = ConicProblem()
    problem.add_params("x", m, kind="imported")
    problem.set_objective(int(nz[0]))

    for bi, size in enumerate(struct, start=1):
        here = [(k, i, j, v) for k, b, i, j, v in rows if b == bi]
        if size < 0:
            diag_const = np.zeros(-size)
            diag_coeff: list[list] = [[] for _ in range(-size)]
            for k, i, j, v in here:
                if i != j:
                    raise AssemblyError(f"off-diagonal entry in diagonal block {bi}")
                if k == 0:
                    diag_const[i - 1] -= v
                else:
                    diag_coeff[i - 1].append((k - 1, v))
            for r in range(-size):
                problem.add_nonneg(float(diag_const[r]), diag_coeff[r])
        else:
            const = [(min(i, j) - 1, max(i, j) - 1, -v) for k, i, j, v in here if k == 0]
            terms = [(k - 1, min(i, j) - 1, max(i, j) - 1, v)
                     for k, i, j, v in here if k != 0]
            ci = [e[0] for e in const]
            cj = [e[1] for e in const]
            cv = [e[2] for e in const]
            problem.add_psd_block(f"sdpa:b{bi}", size,
                                  (ci, cj, cv),
                                  ([t[0] for t in terms], [t[1] for t in terms],
                                   [t[2] for t in terms], [t[3] for t in terms]))
    return problem
