"""Exact linear system solving over the rationals.

Forward elimination uses the Bareiss fraction-free scheme on integer
matrices: every intermediate entry is a minor of the original matrix, so
arithmetic stays in (bounded) integers with one exact division per update
and no gcd churn.  Solutions therefore come out as quotients of minors of
the input matrix, which is what keeps the denominators of rounded
equilibria within the determinant bounds.

Pivoting is by magnitude within a fixed left-to-right column sweep; ties
break on the lowest row index, so the pivot structure is a deterministic
function of the matrix.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm


class LinearSystem:
    """rows of (coefficients, rhs); coefficients may be Fractions, they are
    cleared to integers row by row before elimination."""

    def __init__(self, ncols):
        self.ncols = ncols
        self.rows = []

    def add_row(self, coeffs, rhs):
        row = [Fraction(c) for c in coeffs]
        rhs = Fraction(rhs)
        mult = lcm(rhs.denominator, *(c.denominator for c in row)) if row else 1
        self.rows.append(
            ([int(c * mult) for c in row], int(rhs * mult))
        )

    def add_sparse_row(self, entries, rhs):
        coeffs = [0] * self.ncols
        for idx, val in entries:
            coeffs[idx] += val
        self.add_row(coeffs, rhs)


class EliminationResult:
    def __init__(self, consistent, solution, pivot_cols, free_cols, null_basis, det):
        self.consistent = consistent
        self.solution = solution  # Fractions, free coordinates = 0
        self.pivot_cols = pivot_cols
        self.free_cols = free_cols
        self.null_basis = null_basis  # one solution of Ax=0 per free column
        self.det = det  # pivot-submatrix determinant (up to sign)

    @property
    def unique(self):
        return self.consistent and not self.free_cols


def eliminate(system: LinearSystem) -> EliminationResult:
    ncols = system.ncols
    m = [list(coeffs) + [rhs] for coeffs, rhs in system.rows]
    nrows = len(m)
    width = ncols + 1

    pivot_cols = []
    prev = 1
    rank = 0
    for col in range(ncols):
        best = -1
        best_mag = 0
        for r in range(rank, nrows):
            mag = abs(m[r][col])
            if mag > best_mag:
                best_mag = mag
                best = r
        if best < 0:
            continue
        if best != rank:
            m[best], m[rank] = m[rank], m[best]
        piv = m[rank][col]
        prow = m[rank]
        for r in range(rank + 1, nrows):
            row = m[r]
            factor = row[col]
            if factor:
                for c in range(col, width):
                    row[c] = (piv * row[c] - factor * prow[c]) // prev
                row[col] = 0
            elif piv != prev:
                for c in range(col, width):
                    row[c] = (piv * row[c]) // prev
        pivot_cols.append(col)
        prev = piv
        rank += 1

    # rows past the rank have all-zero coefficients; a nonzero rhs there
    # makes the system inconsistent
    for r in range(rank, nrows):
        if m[r][ncols]:
            return EliminationResult(False, None, pivot_cols, [], [], prev)

    free_cols = [c for c in range(ncols) if c not in set(pivot_cols)]

    def back_substitute(rhs_col):
        x = [Fraction(0)] * ncols
        for k in range(rank - 1, -1, -1):
            col = pivot_cols[k]
            row = m[k]
            acc = Fraction(rhs_col[k])
            for c in range(col + 1, ncols):
                if row[c] and x[c]:
                    acc -= row[c] * x[c]
            x[col] = acc / row[col]
        return x

    solution = back_substitute([m[k][ncols] for k in range(rank)])
    null_basis = []
    for f in free_cols:
        vec = back_substitute([-m[k][f] for k in range(rank)])
        vec[f] = Fraction(1)
        null_basis.append(vec)
    return EliminationResult(True, solution, pivot_cols, free_cols, null_basis, prev)


def solve_unique(system: LinearSystem):
    """Solve a system expected to have exactly one solution; returns the
    Fraction vector or None when inconsistent/underdetermined."""
    res = eliminate(system)
    if not res.consistent or res.free_cols:
        return None
    return res.solution
