"""The flow-form convex program whose optima are market equilibria.

Decision variables: prices p (one per agent, >= 1), money flows y (one per
arc carrying spending), and inverse best bang-per-buck values beta.  The
objective

    sum_i p_i * log(p_i / beta_i)  -  sum_{ij} y_ij * log(u_ij)

is minimized over the circulation polytope {inflow(y) = outflow(y) = p}
intersected with {u_ij * beta_i <= p_j, p >= 1, y >= 0}.  Feasible points
have non-negative objective, the optimum value is 0, and a point with value
0 yields an equilibrium via x_ij = y_ij / p_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError
from .market import Market


@dataclass(frozen=True)
class CPPoint:
    """A point of the program's feasible region.

    ``p`` and ``beta`` are per-agent sequences, ``y`` maps arcs to spending.
    Values are Fractions when ``exact`` else floats.  ``objective`` caches
    the objective value (always a float; exactly-0 points store 0.0).
    """

    p: tuple
    y: dict
    beta: tuple
    exact: bool
    objective: float | None = None

    def with_objective(self, market):
        return CPPoint(self.p, self.y, self.beta, self.exact, objective(self, market))


def eliminate_beta(p, market: Market):
    """Optimal beta for fixed prices: beta_i = min over arcs ij of p_j/u_ij.

    The objective strictly decreases in each beta_i, so pushing beta_i to
    the largest value allowed by the constraints is exactly optimal.  Works
    on Fractions and floats alike.
    """
    beta = []
    for i in range(market.n):
        best = None
        for (a, j) in market.arcs:
            if a != i:
                continue
            val = p[j] / market.u[(i, j)]
            if best is None or val < best:
                best = val
        if best is None:
            raise DomainError(f"agent {i} has no outgoing arc")
        beta.append(best)
    return beta


def objective(point: CPPoint, market: Market) -> float:
    """Objective value as a float.  DomainError outside p > 0, beta > 0."""
    total = 0.0
    for i in range(market.n):
        b = float(point.beta[i])
        pi = float(point.p[i])
        if b <= 0:
            raise DomainError(f"beta[{i}] = {b} <= 0")
        if pi <= 0:
            raise DomainError(f"p[{i}] = {pi} <= 0")
        total += pi * math.log(pi / b)
    for arc, val in point.y.items():
        if val:
            total -= float(val) * math.log(float(market.u[arc]))
    return total


def objective_is_exactly_zero(point: CPPoint, market: Market) -> bool:
    """Certify objective == 0 without transcendental arithmetic.

    When u_ij * beta_i = p_j on every arc with y_ij > 0 and the balance
    equalities hold, log terms cancel arc by arc, so the value is exactly 0.
    Only meaningful for exact points.
    """
    if not point.exact:
        return False
    for (i, j), val in point.y.items():
        if val > 0 and market.u[(i, j)] * point.beta[i] != point.p[j]:
            return False
    ok, _ = is_feasible(point, market, 0)
    return ok


def is_feasible(point: CPPoint, market: Market, tol=1e-9):
    """Check all five constraint families.

    Returns (ok, report) where the report maps family name to the worst
    violation.  Exact points are checked with exact arithmetic and tol is
    ignored.
    """
    exact = point.exact
    zero = Fraction(0) if exact else 0.0
    n = market.n
    inflow = [zero] * n
    outflow = [zero] * n
    y_neg = zero
    for (i, j), val in point.y.items():
        outflow[i] += val
        inflow[j] += val
        if val < 0:
            y_neg = max(y_neg, -val)
    col = max(abs(inflow[j] - point.p[j]) for j in range(n))
    row = max(abs(outflow[i] - point.p[i]) for i in range(n))
    bpb = zero
    for (i, j), u in market.u.items():
        viol = u * point.beta[i] - point.p[j]
        if viol > bpb:
            bpb = viol
    price_lb = max((1 - point.p[i] for i in range(n)), default=zero)
    price_lb = max(price_lb, zero)
    beta_neg = max((-b for b in point.beta), default=zero)
    beta_neg = max(beta_neg, zero)
    report = {
        "column_balance": col,
        "row_balance": row,
        "bang_per_buck": bpb,
        "price_lower_bound": price_lb,
        "nonnegativity": max(y_neg, beta_neg),
    }
    if exact:
        ok = all(v == 0 for v in report.values())
    else:
        scale = max(1.0, max(float(v) for v in point.p))
        ok = all(float(v) <= tol * scale for v in report.values())
    return ok, report


# ---------------------------------------------------------------------------
# Reduced form over flows only
# ---------------------------------------------------------------------------

def _inflow_prices(y, market):
    p = [0.0] * market.n
    for (_, j), val in y.items():
        p[j] += float(val)
    return p


def _argmin_beta(p, market):
    """Per-agent argmin arc of p_j/u_ij, lexicographically smallest on ties."""
    beta = [None] * market.n
    arg = [None] * market.n
    for (i, j) in market.arcs:  # sorted, so first minimizer wins ties
        val = p[j] / float(market.u[(i, j)])
        if beta[i] is None or val < beta[i]:
            beta[i] = val
            arg[i] = j
    return beta, arg


def reduced_objective(y, market: Market) -> float:
    """Objective as a function of flows alone.

    Prices are the inflow map p_j = sum_i y_ij and beta is eliminated; this
    agrees with the full objective on balanced flows.
    """
    p = _inflow_prices(y, market)
    if min(p) <= 0:
        raise DomainError("nonpositive inflow")
    beta, _ = _argmin_beta(p, market)
    total = 0.0
    for i in range(market.n):
        total += p[i] * (math.log(p[i]) - math.log(beta[i]))
    for arc, val in y.items():
        if val:
            total -= float(val) * math.log(float(market.u[arc]))
    return total


def reduced_gradient(y, market: Market):
    """Gradient of the reduced objective with respect to each flow.

    At points where some agent's best bang-per-buck arc is tied, this is a
    subgradient built from the lexicographically smallest argmin.  Raises
    DomainError when some node has nonpositive inflow.
    """
    p = _inflow_prices(y, market)
    if min(p) <= 0:
        raise DomainError("nonpositive inflow")
    beta, arg = _argmin_beta(p, market)
    pull = [0.0] * market.n  # sum of p_i over agents whose argmin is this node
    for i in range(market.n):
        pull[arg[i]] += p[i]
    grad = {}
    for (i, j) in y:
        grad[(i, j)] = (
            math.log(p[j])
            + 1.0
            - math.log(beta[j])
            - pull[j] / p[j]
            - math.log(float(market.u[(i, j)]))
        )
    return grad
