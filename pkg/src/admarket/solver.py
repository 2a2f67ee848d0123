"""Numeric minimization of the convex program by a damped-Newton log-barrier
method.

Flow variables are restricted to the arcs that can carry flow at all; the
2x2-block Hessian of the entropy term plus the barrier terms give a sparse
positive-definite system that is solved as one dense KKT system per Newton
step (instances stay small enough that dense LAPACK wins).  The optimal
points form a ray (any scaling >= 1 of an optimum is optimal), so prices
are capped by ``price_cap`` during the solve and the result is normalized
to min price 1 afterwards.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InfeasibleMarketError
from .graphs import check_star_condition, cycle_cover_point, flow_support
from .market import Market
from .program import CPPoint, eliminate_beta, is_feasible

TERMINATION_NAMES = {
    _kernels.STATUS_CONVERGED: "Converged",
    _kernels.STATUS_ITERATION_LIMIT: "IterationLimit",
    _kernels.STATUS_NUMERICAL_FAILURE: "NumericalFailure",
}


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = 500
    price_cap: float = 1e9
    mu0: float | None = None
    shrink: float = 10.0
    seed: int | None = None  # reserved; the default path is deterministic

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.shrink <= 1:
            raise ValueError("shrink must exceed 1")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    objective: float
    constraint_violation: float
    kkt_residual: float
    termination: str
    wall_time: float

    @property
    def converged(self):
        return self.termination == "Converged"

    def to_json_dict(self):
        return {
            "iterations": self.iterations,
            "objective": self.objective,
            "constraint_violation": self.constraint_violation,
            "kkt_residual": self.kkt_residual,
            "termination": self.termination,
            "wall_time": self.wall_time,
        }


def _support_path(adj, start, goal):
    """BFS shortest path start -> goal over support arcs, as an arc list."""
    if start == goal:
        return []
    parent = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in parent:
                parent[w] = v
                if w == goal:
                    arcs = []
                    cur = goal
                    while parent[cur] is not None:
                        arcs.append((parent[cur], cur))
                        cur = parent[cur]
                    arcs.reverse()
                    return arcs
                queue.append(w)
    return None


def initial_point(market: Market, support):
    """Interior start: twice the cycle-cover point, plus a small extra cycle
    through every support arc so all flow variables are strictly positive.
    The epsilon is a power of two, keeping the start exactly balanced in
    floating point."""
    eps = 2.0**-20
    base = cycle_cover_point(market)
    y = {arc: 2.0 * float(v) for arc, v in base.y.items()}
    adj = [[] for _ in range(market.n)]
    for (i, j) in support:
        adj[i].append(j)
    for (i, j) in support:
        back = _support_path(adj, j, i)
        if back is None:
            continue
        for arc in [(i, j)] + back:
            y[arc] = y.get(arc, 0.0) + eps
    for arc in support:
        y.setdefault(arc, 0.0)
    return y


def _polish(market, support, p, y, tol):
    """Snap a near-optimal iterate onto its binding constraint system.

    Close to an optimum the active set is readable off the iterate; solving
    the (small, well-conditioned) binding equalities in float lands within
    rounding error of the optimal face, which is far more accurate than the
    barrier endgame can reach.  When the solved prices violate some
    off-tight arc uniformly, that arc is a tie the iterate has not resolved
    yet and provably binds, so it is added and the system re-solved.
    Returns a candidate point or None.
    """
    from .exact import _scale_components

    n = market.n
    arcs = market.arcs
    beta_h = eliminate_beta(p, market)
    for eps_t in (1e-4, 1e-3, 1e-5):
        for eps_y in (1e-6, 1e-4):
            tight = {
                (i, j)
                for (i, j) in arcs
                if float(market.u[(i, j)]) * beta_h[i] >= (1.0 - eps_t) * p[j]
            }
            supp = [a for a in support if y[a] > eps_y * p[a[1]]]
            if {i for (i, _) in supp} != set(range(n)):
                continue
            if {j for (_, j) in supp} != set(range(n)):
                continue
            if {i for (i, _) in tight} != set(range(n)):
                continue
            if not set(supp) <= tight:
                continue
            # unresolved ties make the solved prices violate unclassified
            # arcs; search over which of those actually bind (one at a
            # time: ties need not bind jointly)
            stack = [frozenset(tight)]
            seen = set()
            budget = 40
            while stack and budget > 0:
                state = stack.pop()
                if state in seen:
                    continue
                seen.add(state)
                budget -= 1
                cand, grow = _polish_round(market, supp, set(state), p, tol)
                if cand is not None:
                    return cand
                for arc in reversed(grow[:3]):
                    stack.append(state | {arc})
    return None


def _polish_round(market, supp, tight, p, tol):
    """One binding-system solve; returns (candidate | None, arcs to add)."""
    from .exact import _scale_components

    n = market.n
    pinned = set()
    for comp in _scale_components(n, tight | set(supp)):
        pinned.add(min(comp, key=lambda i: (p[i], i)))
    ycol = {a: 2 * n + k for k, a in enumerate(supp)}
    ncols = 2 * n + len(supp)
    rows = []
    rhs = []
    for i in range(n):
        r = np.zeros(ncols)
        r[i] = -1.0
        for a in supp:
            if a[0] == i:
                r[ycol[a]] = 1.0
        rows.append(r)
        rhs.append(0.0)
    for j in range(n):
        r = np.zeros(ncols)
        r[j] = -1.0
        for a in supp:
            if a[1] == j:
                r[ycol[a]] = 1.0
        rows.append(r)
        rhs.append(0.0)
    for (i, j) in sorted(tight):
        r = np.zeros(ncols)
        r[n + i] = float(market.u[(i, j)])
        r[j] += -1.0
        rows.append(r)
        rhs.append(0.0)
    for i in sorted(pinned):
        r = np.zeros(ncols)
        r[i] = 1.0
        rows.append(r)
        rhs.append(1.0)
    a_mat = np.vstack(rows)
    b_vec = np.array(rhs)
    sol, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if np.abs(a_mat @ sol - b_vec).max() > 1e-9:
        return None, []
    for cand_vec in _complete_candidates(a_mat, sol, ycol, market, supp, n):
        cand = _assemble_candidate(cand_vec, ycol, market, supp, n)
        if cand is None:
            continue
        okf, _ = is_feasible(cand, market, 1e-11)
        if okf and abs(cand.objective) <= 0.01 * tol:
            return cand, []
    # arcs the solved prices violate are ties, some of which must bind;
    # report them most-violated first
    grow = []
    scale = max(1.0, float(np.max(np.abs(sol[0:n]))))
    for (i, j) in market.arcs:
        if (i, j) in tight:
            continue
        viol = float(market.u[(i, j)]) * sol[n + i] - sol[j]
        if viol > 1e-8 * scale:
            grow.append((viol, (i, j)))
    grow.sort(reverse=True)
    return None, [arc for _, arc in grow]


def _complete_candidates(a_mat, sol, ycol, market, supp, n):
    """Finish an underdetermined binding-system solve.

    The nullspace directions are scale/flow freedoms the tight constraints
    left open; membership of the optimal face is linear in those
    coordinates (every arc must keep u_ij beta_i <= p_j for the solved
    beta), so walk the vertices and centroid of that small polytope.
    """
    ncols = a_mat.shape[1]
    _, sv, vt = np.linalg.svd(a_mat)
    cut = sv[0] * max(a_mat.shape) * np.finfo(float).eps * 10
    rank = int(np.sum(sv > cut))
    null = vt[rank:]
    d = ncols - rank
    if d == 0:
        return [sol]
    if d > 3:
        return []
    # inequalities c_k + a_k . t >= 0 in the null coordinates; constraints
    # the null directions cannot move are irrelevant for the vertex search
    cons = []
    moved = 1e-9
    for (i, j) in market.arcs:
        u = float(market.u[(i, j)])
        c = sol[j] - u * sol[n + i]
        a = null[:, j] - u * null[:, n + i]
        if np.abs(a).max() > moved:
            cons.append((c, a))
    for arc in supp:
        col = ycol[arc]
        if np.abs(null[:, col]).max() > moved:
            cons.append((sol[col], null[:, col]))
    for i in range(n):
        if np.abs(null[:, i]).max() > moved:
            cons.append((sol[i] - 0.5, null[:, i]))
    out = [sol]
    vertices = []
    from itertools import combinations

    combos = list(combinations(range(len(cons)), d))
    if len(combos) > 4000:
        combos = combos[:4000]
    for combo in combos:
        m_small = np.array([cons[k][1] for k in combo])
        r_small = np.array([-cons[k][0] for k in combo])
        try:
            t = np.linalg.solve(m_small, r_small)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(t)):
            continue
        ok = all(c + a @ t >= -1e-10 for (c, a) in cons)
        if ok:
            vertices.append(t)
    for t in vertices:
        out.append(sol + null.T @ t)
    if vertices:
        mid = np.mean(np.array(vertices), axis=0)
        out.append(sol + null.T @ mid)
    # prefer interior points: centroid first, then vertices, then min-norm
    return list(reversed(out))


def _assemble_candidate(sol, ycol, market, supp, n):
    p2 = sol[0:n]
    if np.min(p2) < 0.4:
        return None
    y2 = {a: float(sol[ycol[a]]) for a in supp}
    if any(v < -1e-9 for v in y2.values()):
        return None
    y2 = {a: max(v, 0.0) for a, v in y2.items()}
    alpha = float(np.min(p2))
    p2 = [float(v) / alpha for v in p2]
    y2 = {a: v / alpha for a, v in y2.items()}
    beta2 = eliminate_beta(p2, market)
    return CPPoint(tuple(p2), y2, tuple(beta2), exact=False).with_objective(market)


def solve(market: Market, config: SolverConfig | None = None):
    """Minimize the program; returns (CPPoint, SolveReport).

    Raises InfeasibleMarketError when the existence condition fails.  A
    report with termination != "Converged" signals failure to reach the
    tolerance; the returned point is still the best iterate found.
    """
    config = config or SolverConfig()
    if config.price_cap < market.n:
        raise ValueError("price_cap must be at least the number of agents")
    verdict = check_star_condition(market)
    if not verdict.feasible:
        raise InfeasibleMarketError(
            f"no equilibrium exists: node {verdict.witness_node} heads a sink "
            "component without a loop",
            witness_node=verdict.witness_node,
            witness_set=verdict.witness_set,
        )

    t0 = time.perf_counter()
    n = market.n
    arcs = market.arcs
    support = flow_support(market).arcs

    esrc = np.array([a for (a, _) in arcs], dtype=np.int64)
    edst = np.array([b for (_, b) in arcs], dtype=np.int64)
    eu = np.array([float(market.u[a]) for a in arcs])
    elogu = np.log(eu)
    ssrc = np.array([a for (a, _) in support], dtype=np.int64)
    sdst = np.array([b for (_, b) in support], dtype=np.int64)
    slogu = np.array([math.log(float(market.u[a])) for a in support])

    y0_map = initial_point(market, support)
    y0 = np.array([y0_map[a] for a in support])
    p0 = np.zeros(n)
    for idx, (_, j) in enumerate(support):
        p0[j] += y0[idx]
    beta0 = 0.875 * np.array(eliminate_beta(p0, market), dtype=float)

    nineq = len(arcs) + 2 * n + len(support)
    f0 = _kernels.reported_objective(n, esrc, edst, eu, ssrc, slogu, p0, y0)
    mu0 = config.mu0 if config.mu0 is not None else max(1.0, f0 / nineq)

    p, beta, y, status, iters, mu, f_rep, res, decrement = _kernels.barrier_solve(
        n,
        esrc,
        edst,
        eu,
        elogu,
        ssrc,
        sdst,
        slogu,
        p0.copy(),
        beta0.copy(),
        y0.copy(),
        config.tolerance,
        config.max_iterations,
        config.price_cap,
        mu0,
        config.shrink,
    )

    termination = TERMINATION_NAMES[int(status)]
    if termination != "Converged" and float(np.max(p)) >= 0.99 * config.price_cap:
        termination = "PriceCapHit"

    # normalize to min price 1: down-scaling an optimal ray point stays
    # optimal and keeps p >= 1
    alpha = float(np.min(p))
    p = p / alpha
    y = y / alpha
    beta_hard = eliminate_beta(p, market)
    y_map = {arc: float(y[idx]) for idx, arc in enumerate(support)}
    point = CPPoint(tuple(float(v) for v in p), y_map, tuple(beta_hard), exact=False)
    point = point.with_objective(market)
    violation = float(res)

    polished = _polish(market, support, [float(v) for v in p], y_map, config.tolerance)
    if polished is not None and abs(polished.objective) <= max(
        abs(point.objective), 0.01 * config.tolerance
    ):
        point = polished
        _, feas = is_feasible(point, market, config.tolerance)
        violation = max(float(v) for v in feas.values())
    if (
        termination in ("IterationLimit", "NumericalFailure")
        and abs(point.objective) <= config.tolerance
        and violation <= config.tolerance
    ):
        termination = "Converged"

    report = SolveReport(
        iterations=int(iters),
        objective=float(point.objective),
        constraint_violation=violation,
        kkt_residual=float(decrement),
        termination=termination,
        wall_time=time.perf_counter() - t0,
    )
    return point, report
