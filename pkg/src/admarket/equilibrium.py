"""Market equilibria: extraction from program optima, verification against
the defining conditions, and the embedding back into the program.

An equilibrium is prices p > 0 and allocations x >= 0 such that every good
is fully sold, every agent's spending equals her income, and positive
purchases happen only at the agent's best bang-per-buck ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import NotOptimalError, VerificationFailedError
from .market import Market
from .program import CPPoint, eliminate_beta, objective
from .rationals import format_rational, parse_rational


@dataclass(frozen=True)
class Equilibrium:
    """Prices, allocations, the induced spending y_ij = p_j * x_ij, and
    per-agent utilities.  Fractions when ``exact`` else floats."""

    p: tuple
    x: dict
    y: dict
    utilities: tuple
    exact: bool


def make_equilibrium(p, x, market: Market, exact: bool) -> Equilibrium:
    """Build the derived fields from prices and allocations."""
    zero = Fraction(0) if exact else 0.0
    x = {arc: val for arc, val in x.items() if val}
    y = {arc: p[arc[1]] * val for arc, val in x.items()}
    utilities = []
    for i in range(market.n):
        u_i = zero
        for (a, j), val in x.items():
            if a == i:
                u_i += (market.u[(a, j)] if exact else float(market.u[(a, j)])) * val
        utilities.append(u_i)
    return Equilibrium(tuple(p), x, y, tuple(utilities), exact)


def agent_utilities(eq: Equilibrium, market: Market):
    """U_i = sum_j u_ij x_ij; identical across all equilibria of a market."""
    return make_equilibrium(eq.p, eq.x, market, eq.exact).utilities


@dataclass(frozen=True)
class EquilibriumReport:
    clearing: float
    budget: float
    bang_per_buck: float
    positive_prices: bool
    ok: bool
    tol: float

    def worst(self):
        return max(float(self.clearing), float(self.budget), float(self.bang_per_buck))


def verify_equilibrium(eq: Equilibrium, market: Market, tol: float = 1e-6):
    """Check the four equilibrium conditions.

    Exact equilibria are checked with exact arithmetic (tol ignored).  In
    numeric mode the clearing/budget tolerance scales with max(1, max p)
    since those residuals are price-scale covariant, and allocations below
    tol are exempt from the bang-per-buck comparison (numeric supports are
    fuzzy; the exact stage removes all fuzz).
    """
    exact = eq.exact
    n = market.n
    zero = Fraction(0) if exact else 0.0
    sold = [zero] * n
    spent = [zero] * n
    for (i, j), val in eq.x.items():
        if val < 0:
            return EquilibriumReport(math.inf, math.inf, math.inf, False, False, tol)
        sold[j] += val
        spent[i] += val * eq.p[j]
    one = Fraction(1) if exact else 1.0
    clearing = max(abs(sold[j] - one) for j in range(n))
    budget = max(abs(spent[i] - eq.p[i]) for i in range(n))

    bpb = zero
    for i in range(n):
        rates = {}
        for (a, j) in market.arcs:
            if a == i:
                rates[j] = (market.u[(i, j)] if exact else float(market.u[(i, j)])) / eq.p[j]
        if not rates:
            continue
        best = max(rates.values())
        for (a, j), val in eq.x.items():
            if a != i:
                continue
            if not exact and val <= tol:
                continue
            if val > 0:
                gap = best - rates.get(j, zero)
                if gap > bpb:
                    bpb = gap
    positive = min(eq.p) > 0

    if exact:
        ok = positive and clearing == 0 and budget == 0 and bpb == 0
    else:
        scale = max(1.0, max(float(v) for v in eq.p))
        ok = (
            positive
            and float(clearing) <= tol * scale
            and float(budget) <= tol * scale
            and float(bpb) <= tol
        )
    return EquilibriumReport(clearing, budget, bpb, positive, ok, tol)


def extract_equilibrium(point: CPPoint, market: Market, tolerance: float = 1e-8):
    """Optimal program point -> equilibrium via x_ij = y_ij / p_j.

    Raises NotOptimalError if the point's objective exceeds ``tolerance``.
    The verification tolerance is derived from the objective gap: residual
    slack in the bang-per-buck inequalities is what keeps the objective
    above zero.
    """
    obj = point.objective if point.objective is not None else objective(point, market)
    if obj > tolerance:
        raise NotOptimalError(
            f"objective {obj} exceeds tolerance {tolerance}; not an optimum"
        )
    exact = point.exact
    x = {}
    for (i, j), val in point.y.items():
        if val:
            x[(i, j)] = val / point.p[j]
    eq = make_equilibrium(point.p, x, market, exact)
    derived_tol = max(1e-6, 10.0 * math.sqrt(max(float(obj), 0.0)))
    report = verify_equilibrium(eq, market, derived_tol)
    if not report.ok:
        raise VerificationFailedError(
            f"extracted point failed equilibrium verification: {report}"
        )
    return eq


def embed_equilibrium(eq: Equilibrium, market: Market) -> CPPoint:
    """Equilibrium -> optimal program point.

    Rescale by alpha = 1/min(1, min p) so prices clear the lower bound,
    set y_ij to the rescaled spending and beta to the price-optimal
    elimination.  In exact mode the embedded point has objective exactly 0
    (the log terms cancel arc by arc because u_ij beta_i = p_j wherever
    y_ij > 0).
    """
    report = verify_equilibrium(eq, market)
    if not report.ok:
        raise VerificationFailedError(f"input does not verify: {report}")
    exact = eq.exact
    one = Fraction(1) if exact else 1.0
    alpha = one / min(one, min(eq.p))
    p = tuple(alpha * v for v in eq.p)
    y = {arc: p[arc[1]] * val for arc, val in eq.x.items() if val}
    beta = tuple(eliminate_beta(p, market))
    point = CPPoint(p, y, beta, exact)
    if exact:
        return CPPoint(p, y, beta, exact, 0.0)
    return point.with_objective(market)


def convex_combine(eq1: Equilibrium, eq2: Equilibrium, lam, market: Market):
    """Combine two equilibria of one market: (y, p) mixes linearly and x is
    recomputed as y/p.  The result must itself verify (equilibria form a
    convex set in (y, p)); a failure here falsifies the implementation, not
    the inputs."""
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    if eq1.exact != eq2.exact:
        raise ValueError("cannot mix exact and numeric equilibria")
    exact = eq1.exact
    lam = Fraction(lam) if exact else float(lam)
    one = Fraction(1) if exact else 1.0
    p = tuple(lam * a + (one - lam) * b for a, b in zip(eq1.p, eq2.p))
    y = {}
    for arc in set(eq1.y) | set(eq2.y):
        zero = Fraction(0) if exact else 0.0
        val = lam * eq1.y.get(arc, zero) + (one - lam) * eq2.y.get(arc, zero)
        if val:
            y[arc] = val
    x = {arc: val / p[arc[1]] for arc, val in y.items()}
    combined = make_equilibrium(p, x, market, exact)
    report = verify_equilibrium(combined, market)
    if not report.ok:
        raise VerificationFailedError(
            f"convex combination failed to verify (implementation bug): {report}"
        )
    return combined


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def equilibrium_to_json_dict(eq: Equilibrium) -> dict:
    from .rationals import format_float

    if eq.exact:
        fmt = lambda v: str(format_rational(v))
    else:
        fmt = format_float
    return {
        "prices": [fmt(v) for v in eq.p],
        "allocations": [
            {"agent": i, "good": j, "x": fmt(v)}
            for (i, j), v in sorted(eq.x.items())
            if v
        ],
        "utilities": [fmt(v) for v in eq.utilities],
        "exact": eq.exact,
    }


def equilibrium_from_json_dict(doc, market: Market) -> Equilibrium:
    exact = bool(doc.get("exact", False))

    def parse_val(v):
        if exact:
            return parse_rational(v)
        return float(parse_rational(v)) if isinstance(v, str) else float(v)

    p = tuple(parse_val(v) for v in doc["prices"])
    x = {}
    for entry in doc["allocations"]:
        x[(int(entry["agent"]), int(entry["good"]))] = parse_val(entry["x"])
    return make_equilibrium(p, x, market, exact)
