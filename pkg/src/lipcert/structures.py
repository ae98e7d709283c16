"""Structure classes for value-function tiles.

A certificate on a signal interface has the repeated form X = I_N (x) Xt with
a single c x c tile Xt; on vector interfaces X is the tile itself.  The tile
may be restricted further by the adjacent layers:

    FREE          any symmetric tile                      c(c+1)/2 parameters
    DIAG          diag(lam)                               c
    GROUP(g)      diag(lam) (x) I_g + diag(gam) (x) 11^T  2 c/g
    GROUP_DIAG(g) diag(lam) (x) I_g                       c/g

GROUP is the multiplier cone used for sorting activations; GROUP_DIAG is its
intersection with the diagonal matrices.  The meet of two structures is the
tightest class contained in both; it is total because group sizes at one
interface always divide the channel count.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lcm

from .errors import AssemblyError

FREE, DIAG, GROUP, GROUP_DIAG = "free", "diag", "group", "group_diag"


@dataclass(frozen=True)
class Structure:
    kind: str
    group: int = 0   # group size; only for GROUP / GROUP_DIAG

    def __post_init__(self):
        if self.kind in (GROUP, GROUP_DIAG):
            if self.group < 1:
                raise AssemblyError(f"structure {self.kind} needs a positive group size")
        elif self.kind in (FREE, DIAG):
            if self.group:
                raise AssemblyError(f"structure {self.kind} takes no group size")
        else:
            raise AssemblyError(f"unknown structure kind {self.kind!r}")

    def check_dim(self, c: int) -> None:
        if self.kind in (GROUP, GROUP_DIAG) and c % self.group:
            raise AssemblyError(f"group size {self.group} does not divide tile dimension {c}")

    def nparams(self, c: int) -> int:
        self.check_dim(c)
        if self.kind == FREE:
            return c * (c + 1) // 2
        if self.kind == DIAG:
            return c
        if self.kind == GROUP:
            return 2 * (c // self.group)
        return c // self.group

    def basis_entries(self, c: int):
        """Per parameter, the upper-triangle entries (i, j, value) of its
        basis tile.  Parameter order is documented and stable:

        FREE: column-major upper triangle (j outer, i = 0..j).
        DIAG: diagonal order.
        GROUP: per group j the pair (lam_j, gam_j).
        GROUP_DIAG: per group j the single lam_j.
        """
        self.check_dim(c)
        out = []
        if self.kind == FREE:
            for j in range(c):
                for i in range(j + 1):
                    out.append([(i, j, 1.0)])
            return out
        if self.kind == DIAG:
            return [[(i, i, 1.0)] for i in range(c)]
        g = self.group
        for b in range(c // g):
            lo = b * g
            lam = [(lo + k, lo + k, 1.0) for k in range(g)]
            if self.kind == GROUP_DIAG:
                out.append(lam)
            else:
                gam = [(lo + k, lo + l, 1.0) for k in range(g) for l in range(k, g)]
                out.append(lam)
                out.append(gam)
        return out

    def entry_coeffs(self, c: int, i: int, j: int):
        """Tile entry (i, j) as a list of (param index, coeff)."""
        self.check_dim(c)
        if i > j:
            i, j = j, i
        if self.kind == FREE:
            return [(j * (j + 1) // 2 + i, 1.0)]
        if self.kind == DIAG:
            return [(i, 1.0)] if i == j else []
        g = self.group
        bi, bj = i // g, j // g
        if bi != bj:
            return []
        if self.kind == GROUP_DIAG:
            return [(bi, 1.0)] if i == j else []
        return [(2 * bi, 1.0), (2 * bi + 1, 1.0)] if i == j else [(2 * bi + 1, 1.0)]

    def psd_rows(self, c: int):
        """Linear inequalities equivalent to tile >= 0, or None when the
        structure needs a genuine PSD block (FREE).

        GROUP tiles have eigenvalues lam_j (multiplicity g-1) and
        lam_j + g*gam_j per group, so PSD-ness is linear in the parameters.
        """
        self.check_dim(c)
        if self.kind == FREE:
            return None
        if self.kind == DIAG:
            return [[(p, 1.0)] for p in range(c)]
        g = self.group
        rows = []
        for b in range(c // g):
            if self.kind == GROUP_DIAG:
                rows.append([(b, 1.0)])
            else:
                rows.append([(2 * b, 1.0)])
                rows.append([(2 * b, 1.0), (2 * b + 1, float(g))])
        return rows


def meet(a: Structure, b: Structure) -> Structure:
    """Tightest structure contained in both (total on this lattice)."""
    if a == b:
        return a
    if a.kind == FREE:
        return b
    if b.kind == FREE:
        return a
    # remaining kinds are all diagonal-or-group shaped
    if a.kind == DIAG:
        if b.kind == DIAG:
            return Structure(DIAG)
        return Structure(GROUP_DIAG, b.group)
    if b.kind == DIAG:
        return Structure(GROUP_DIAG, a.group)
    if a.kind == GROUP and b.kind == GROUP:
        if a.group == b.group:
            return a
        return Structure(GROUP_DIAG, lcm(a.group, b.group))
    # at least one side is GROUP_DIAG: the meet is diagonal, constant on the
    # join of the two block partitions
    return Structure(GROUP_DIAG, lcm(a.group, b.group))
