"""Lagrange multipliers for the convex program and the KKT system.

An equilibrium is self-dual: besides giving an optimal primal point it
yields its own optimal multipliers (delta = log p, gamma = log beta,
w = x, tau = 0).  The multipliers tie the program to the two classical
formulations: the log-price feasibility system (checked by verify_cpj),
the max-min program with the exponential constraint (verify_cpc), and the
Lagrangian dual itself (verify_cpd).

Exact verification avoids transcendental arithmetic where the structure
lets it: inequalities between sums of logarithms exponentiate to rational
comparisons whenever one log appears on each side.  Genuinely mixed
expressions (the dual's constraint for arbitrary multipliers) are compared
in 128-bit floating point with a directed safety margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .equilibrium import Equilibrium, embed_equilibrium, verify_equilibrium
from .errors import VerificationFailedError
from .market import Market
from .program import CPPoint, eliminate_beta, objective


@dataclass(frozen=True)
class DualCertificate:
    """Multipliers for the program's constraint families, stored in log
    space exactly as the stationarity conditions use them.

    delta: column (in-balance) multipliers, gamma: row (out-balance)
    multipliers, w: per-arc multipliers of the bang-per-buck constraints,
    tau: multipliers of the price lower bounds.
    """

    delta: tuple
    gamma: tuple
    w: dict
    tau: tuple
    residuals: dict | None = None

    def to_json_dict(self):
        return {
            "delta": [float(v) for v in self.delta],
            "gamma": [float(v) for v in self.gamma],
            "w": [
                {"from": i, "to": j, "w": float(v)} for (i, j), v in sorted(self.w.items())
            ],
            "tau": [float(v) for v in self.tau],
            "residuals": {k: float(v) for k, v in (self.residuals or {}).items()},
        }


@dataclass(frozen=True)
class KKTReport:
    residuals: dict
    ok: bool
    tol: float


def verify_kkt(point: CPPoint, cert: DualCertificate, market: Market, tol: float = 1e-9):
    """Residuals of the KKT system for (point, cert).

    Families: the dual feasibility inequality on arcs and its
    complementarity with the flow, per-agent stationarity, the multiplier
    money identities, complementary slackness of the price bounds and
    bang-per-buck constraints, and the identity tying the objective to the
    sum of the price-bound multipliers.
    """
    n = market.n
    p = [float(v) for v in point.p]
    beta = [float(v) for v in point.beta]
    delta = [float(v) for v in cert.delta]
    gamma = [float(v) for v in cert.gamma]
    tau = [float(v) for v in cert.tau]
    w = {arc: float(v) for arc, v in cert.w.items()}
    y = {arc: float(v) for arc, v in point.y.items()}

    kkt1_feas = 0.0
    kkt1_comp = 0.0
    for (i, j), u in market.u.items():
        logu = math.log(float(u))
        slack = -logu + delta[j] - gamma[i]
        kkt1_feas = max(kkt1_feas, -slack)
        y_ij = y.get((i, j), 0.0)
        if y_ij:
            kkt1_comp = max(kkt1_comp, abs(y_ij * slack))

    kkt2 = 0.0
    in_w = [0.0] * n
    for (i, j), val in w.items():
        in_w[j] += val
    for i in range(n):
        lhs = delta[i] - gamma[i] + in_w[i] + tau[i]
        rhs = math.log(p[i] / beta[i]) + 1.0
        kkt2 = max(kkt2, abs(lhs - rhs))

    kkt3 = 0.0
    kkt3b = 0.0
    uw = [0.0] * n
    pw = [0.0] * n
    for (i, j), val in w.items():
        uw[i] += float(market.u[(i, j)]) * val
        pw[i] += p[j] * val
    for i in range(n):
        kkt3 = max(kkt3, abs(uw[i] - p[i] / beta[i]))
        kkt3b = max(kkt3b, abs(p[i] - pw[i]))

    comp_tau = max(abs(tau[i] * (p[i] - 1.0)) for i in range(n))
    comp_w = 0.0
    for (i, j), val in w.items():
        comp_w = max(comp_w, abs(val * (p[j] - float(market.u[(i, j)]) * beta[i])))

    obj = point.objective if point.objective is not None else objective(point, market)
    gap = abs(float(obj) - sum(tau))

    residuals = {
        "kkt1_feasibility": kkt1_feas,
        "kkt1_complementarity": kkt1_comp,
        "kkt2_stationarity": kkt2,
        "kkt3_money": kkt3,
        "kkt3b_price_identity": kkt3b,
        "comp_slack_tau": comp_tau,
        "comp_slack_w": comp_w,
        "gap_identity": gap,
    }
    return KKTReport(residuals, all(v <= tol for v in residuals.values()), tol)


def self_dual_certificate(eq: Equilibrium, market: Market) -> DualCertificate:
    """Optimal multipliers read off the equilibrium itself: delta = log p,
    gamma = log beta, w = x, tau = 0.  Requires min price 1 normalization
    so the price lower bounds hold."""
    report = verify_equilibrium(eq, market)
    if not report.ok:
        raise VerificationFailedError(f"equilibrium does not verify: {report}")
    if float(min(eq.p)) < 1.0 - 1e-12:
        raise VerificationFailedError("certificate needs the min-price-1 normalization")
    beta = eliminate_beta(eq.p, market)
    delta = tuple(math.log(float(v)) for v in eq.p)
    gamma = tuple(math.log(float(v)) for v in beta)
    tau = tuple(0.0 for _ in range(market.n))
    cert = DualCertificate(delta, gamma, dict(eq.x), tau)
    point = embed_equilibrium(eq, market)
    rep = verify_kkt(point, cert, market)
    return DualCertificate(delta, gamma, dict(eq.x), tau, rep.residuals)


def verify_self_dual_exact(eq: Equilibrium, market: Market):
    """Exact-arithmetic KKT check of the self-dual multipliers.

    Each family exponentiates to a rational identity: dual feasibility and
    its tightness become u_ij*beta_i <= p_j (= on support), stationarity
    becomes the goods-clearing equations, the money identities become the
    budget equations.  Returns (ok, failures).
    """
    if not eq.exact:
        raise ValueError("exact verification requires an exact equilibrium")
    failures = []
    n = market.n
    beta = eliminate_beta(eq.p, market)
    if min(eq.p) < 1:
        failures.append("price lower bound violated (normalize to min price 1)")
    for (i, j), u in market.u.items():
        if u * beta[i] > eq.p[j]:
            failures.append(f"dual feasibility fails on arc ({i},{j})")
        if eq.x.get((i, j), Fraction(0)) > 0 and u * beta[i] != eq.p[j]:
            failures.append(f"tightness fails on support arc ({i},{j})")
    sold = [Fraction(0)] * n
    uw = [Fraction(0)] * n
    pw = [Fraction(0)] * n
    for (i, j), val in eq.x.items():
        sold[j] += val
        uw[i] += market.u[(i, j)] * val
        pw[i] += eq.p[j] * val
    for i in range(n):
        if sold[i] != 1:
            failures.append(f"stationarity (clearing) fails for agent {i}")
        if uw[i] != eq.p[i] / beta[i]:
            failures.append(f"money identity (utility form) fails for agent {i}")
        if pw[i] != eq.p[i]:
            failures.append(f"money identity (price form) fails for agent {i}")
    return not failures, failures


# ---------------------------------------------------------------------------
# Related convex programs as verification predicates
# ---------------------------------------------------------------------------

def verify_cpj(eq: Equilibrium, market: Market, tol: float = 1e-9) -> bool:
    """Feasibility of the log-price system: with q = log p,
    q_i - q_j <= log(sum_k u_ik x_ik) - log u_ij on every arc, and every
    good exactly sold.  Exponentiated form: p_i * u_ij <= U_i * p_j."""
    n = market.n
    sold = [Fraction(0) if eq.exact else 0.0] * n
    for (i, j), val in eq.x.items():
        sold[j] += val
    if eq.exact:
        for i in range(n):
            if sold[i] != 1:
                return False
        for (i, j), u in market.u.items():
            if eq.p[i] * u > eq.utilities[i] * eq.p[j]:
                return False
        return True
    scale = max(1.0, max(float(v) for v in eq.p))
    if any(abs(float(sold[i]) - 1.0) > tol * scale for i in range(n)):
        return False
    for (i, j), u in market.u.items():
        lhs = math.log(float(eq.p[i])) - math.log(float(eq.p[j]))
        rhs = math.log(float(eq.utilities[i])) - math.log(float(u))
        if lhs > rhs + tol:
            return False
    return True


def verify_cpc(eq: Equilibrium, market: Market, tol: float = 1e-9) -> bool:
    """Optimality of (0, x, log p) for the max-min program: every arc's
    surplus sum_k u_ik x_ik - u_ij e^{q_i - q_j} is non-negative and nobody
    oversells."""
    n = market.n
    sold = [Fraction(0) if eq.exact else 0.0] * n
    for (i, j), val in eq.x.items():
        sold[j] += val
    if eq.exact:
        if any(sold[i] > 1 for i in range(n)):
            return False
        for (i, j), u in market.u.items():
            if u * eq.p[i] > eq.utilities[i] * eq.p[j]:
                return False
        return True
    scale = max(1.0, max(float(v) for v in eq.p))
    if any(float(sold[i]) > 1.0 + tol * scale for i in range(n)):
        return False
    for (i, j), u in market.u.items():
        lhs = float(u) * float(eq.p[i]) / float(eq.p[j])
        if lhs > float(eq.utilities[i]) * (1.0 + tol) + tol:
            return False
    return True


def _hp_cpd_slack(delta_i, delta_j, tau_i, in_w, uw, logu):
    """1 - sum_k w_ki + log(sum_k u_ik w_ik) - log u_ij - (delta_i - delta_j
    + tau_i), evaluated with a 128-bit mantissa."""
    with mpmath.workprec(128):
        if uw <= 0:
            return mpmath.mpf("-inf")
        rhs = 1 - mpmath.mpf(in_w) + mpmath.log(mpmath.mpf(uw)) - mpmath.mpf(logu)
        lhs = mpmath.mpf(delta_i) - mpmath.mpf(delta_j) + mpmath.mpf(tau_i)
        return rhs - lhs


def verify_cpd(
    cert: DualCertificate,
    market: Market,
    tol: float = 1e-9,
    require_zero_sum: bool = False,
) -> bool:
    """Feasibility of the multipliers for the Lagrangian dual.

    The dual does not bound sum_i w_ij by 1 (its feasible region is larger
    than the max-min program's); only the arc inequalities and the sign
    constraints are enforced.  With ``require_zero_sum`` (self-dual
    certificates at an optimum), additionally sum tau = 0.
    """
    n = market.n
    if any(float(t) < -tol for t in cert.tau):
        return False
    if any(float(v) < -tol for v in cert.w.values()):
        return False
    in_w = [0.0] * n
    uw = [0.0] * n
    for (i, j), val in cert.w.items():
        in_w[j] += float(val)
        uw[i] += float(market.u[(i, j)]) * float(val)
    margin = mpmath.mpf(2) ** -80
    for (i, j), u in market.u.items():
        slack = _hp_cpd_slack(
            float(cert.delta[i]),
            float(cert.delta[j]),
            float(cert.tau[i]),
            in_w[i],
            uw[i],
            math.log(float(u)),
        )
        if slack < -(tol + margin):
            return False
    if require_zero_sum and abs(sum(float(t) for t in cert.tau)) > tol:
        return False
    return True


def map_cpc_to_cpd(t, x, q, n) -> DualCertificate:
    """Embed a max-min feasible point into the dual: delta = q, w = x,
    tau = t on every agent (gamma plays no role in the dual's constraints
    and is set to zero)."""
    return DualCertificate(
        delta=tuple(float(v) for v in q),
        gamma=tuple(0.0 for _ in range(n)),
        w={arc: float(v) for arc, v in x.items()},
        tau=tuple(float(t) for _ in range(n)),
    )
