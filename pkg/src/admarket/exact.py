"""Exact rational equilibria: rounding near-optimal numeric points to
vertices of the feasible region, support sparsification, determinant-based
bitsize bounds, and a brute-force support-enumeration oracle for small
markets.

The rounding step classifies which constraints the numeric point has
pinned (flow support, tight bang-per-buck arcs, prices at the lower
bound), solves that binding equality system exactly over the rationals,
and accepts the candidate only if every original constraint and every
equilibrium condition holds exactly.  Because the solution comes out of
one integer linear system, each coordinate is a quotient of minors, which
is what bounds the denominators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .equilibrium import Equilibrium, make_equilibrium, verify_equilibrium
from .errors import (
    InconsistentTightSetError,
    RoundingFailedError,
    SizeLimitError,
)
from .exact_linalg import LinearSystem, eliminate
from .graphs import flow_support
from .market import Market, scale_to_integer_utilities
from .program import CPPoint, eliminate_beta, is_feasible
from .rationals import isqrt_ceil


@dataclass(frozen=True)
class TightSet:
    """Constraints believed active at a near-optimal numeric point."""

    support: tuple  # arcs with y_ij meaningfully positive
    tight_bpb: tuple  # arcs with u_ij * beta_i ~= p_j
    tight_prices: tuple  # agents with p_i ~= 1


@dataclass(frozen=True)
class RationalSolution:
    """Exact optimal point plus the equilibrium it induces.

    All program constraints hold exactly, u_ij*beta_i = p_j on every
    spending arc (so the objective is exactly 0 by termwise cancellation),
    and x = y/p verifies the equilibrium conditions exactly.
    """

    p: tuple
    y: dict
    beta: tuple
    x: dict

    def to_equilibrium(self, market: Market) -> Equilibrium:
        return make_equilibrium(self.p, self.x, market, exact=True)

    def to_cppoint(self) -> CPPoint:
        return CPPoint(self.p, dict(self.y), self.beta, exact=True, objective=0.0)

    def max_price_spending_denominator(self):
        dens = [v.denominator for v in self.p]
        dens += [v.denominator for v in self.y.values()]
        return max(dens)

    def max_allocation_denominator(self):
        return max((v.denominator for v in self.x.values()), default=1)

    def denominator_bits(self):
        return {
            "prices_spending": self.max_price_spending_denominator().bit_length(),
            "allocations": self.max_allocation_denominator().bit_length(),
        }

    def sort_key(self):
        return (self.p, tuple(sorted(self.y.items())))


def bitsize_bound(n: int, U: int):
    """Determinant bounds on equilibrium price/spending denominators for an
    integer market with n agents and utilities at most U.

    Returns (hadamard, factorial) as exact integers.  The Hadamard form
    contains (n+3)^(n+1/2); it is kept sound by taking the ceiling of the
    integer square root of (n+3)^(2n+1) instead of going through floats.
    """
    if n < 1 or U < 1:
        raise ValueError("need n >= 1 and U >= 1")
    hadamard = 2 ** (n - 1) * U**n * isqrt_ceil((n + 3) ** (2 * n + 1))
    factorial = math.factorial(n) * U**n
    return hadamard, factorial


def detect_tight_set(
    point: CPPoint,
    market: Market,
    eps_y: float = 1e-6,
    eps_t: float = 1e-5,
    eps_p: float = 1e-6,
) -> TightSet:
    """Classify active constraints at a near-optimal point.

    Raises InconsistentTightSetError when some arc carries meaningful flow
    without its bang-per-buck constraint looking tight; that means the
    numeric solution is not accurate enough to round.
    """
    support = []
    for (i, j), val in point.y.items():
        if float(val) > eps_y * float(point.p[j]):
            support.append((i, j))
    tight = []
    for (i, j), u in market.u.items():
        if float(u) * float(point.beta[i]) >= (1.0 - eps_t) * float(point.p[j]):
            tight.append((i, j))
    tight_set = set(tight)
    for arc in support:
        if arc not in tight_set:
            raise InconsistentTightSetError(
                f"arc {arc} carries flow but is not bang-per-buck tight; "
                "solver accuracy insufficient for rounding"
            )
    prices = [i for i in range(market.n) if float(point.p[i]) <= 1.0 + eps_p]
    return TightSet(tuple(sorted(support)), tuple(sorted(tight)), tuple(prices))


# ---------------------------------------------------------------------------
# Binding-system assembly (shared by rounding and the oracle)
# ---------------------------------------------------------------------------

def _build_system(n, int_u, support, tight_arcs, pinned_agents):
    """Equality system over columns [p_0..p_{n-1} | beta_0.. | y_a (a in
    support order)].  Rows: out/in balance on the support, u_ij*beta_i = p_j
    on tight arcs, p_i = 1 on pinned agents."""
    m = len(support)
    ncols = 2 * n + m
    sys = LinearSystem(ncols)
    ycol = {arc: 2 * n + k for k, arc in enumerate(support)}

    for i in range(n):
        coeffs = [0] * ncols
        coeffs[i] = -1
        for arc in support:
            if arc[0] == i:
                coeffs[ycol[arc]] = 1
        sys.rows.append((coeffs, 0))
    for j in range(n):
        coeffs = [0] * ncols
        coeffs[j] = -1
        for arc in support:
            if arc[1] == j:
                coeffs[ycol[arc]] = 1
        sys.rows.append((coeffs, 0))
    for (i, j) in tight_arcs:
        coeffs = [0] * ncols
        coeffs[n + i] = int_u[(i, j)]
        coeffs[j] += -1
        sys.rows.append((coeffs, 0))
    for i in pinned_agents:
        coeffs = [0] * ncols
        coeffs[i] = 1
        sys.rows.append((coeffs, 1))
    return sys, ycol


def _scale_components(n, arcs):
    """Connected components of agents under the symmetrized arc relation;
    each component's variables can be scaled independently by the
    homogeneous part of the binding system."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (i, j) in arcs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    comps = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def _candidate_from_solution(sol, n, support, market: Market):
    """Turn a raw solution vector into a verified exact solution, or None."""
    p = sol[0:n]
    if any(v <= 0 for v in p):
        return None
    y = {}
    for k, arc in enumerate(support):
        val = sol[2 * n + k]
        if val < 0:
            return None
        if val > 0:
            y[arc] = val
    beta = eliminate_beta(p, market)
    # every spending arc must sit at the bang-per-buck optimum
    for (i, j), val in y.items():
        if market.u[(i, j)] * beta[i] != p[j]:
            return None
    # normalize to min price 1 (scaling an optimal point along its ray)
    alpha = min(p)
    p = tuple(v / alpha for v in p)
    y = {arc: val / alpha for arc, val in y.items()}
    beta = tuple(v / alpha for v in beta)
    x = {arc: val / p[arc[1]] for arc, val in y.items()}
    eq = make_equilibrium(p, x, market, exact=True)
    if not verify_equilibrium(eq, market).ok:
        return None
    point = CPPoint(p, y, beta, exact=True)
    ok, _ = is_feasible(point, market, 0)
    if not ok:
        return None
    return RationalSolution(p, y, beta, x)


# ---------------------------------------------------------------------------
# Exact rounding of a numeric optimum
# ---------------------------------------------------------------------------

THRESHOLD_SCHEDULE = tuple(
    (eps_t, eps_y) for eps_t in (1e-5, 1e-4, 1e-6) for eps_y in (1e-6, 1e-5, 1e-7)
)


def _binding_candidates(n, int_u, support, tight, pinned):
    """Solve the binding system; on underdetermination enumerate the free-
    parameter polytope's vertices (plus centroid) exactly.

    Returns (list of solution vectors, "inconsistent" | "").
    """
    sys, _ = _build_system(n, int_u, support, sorted(tight), sorted(pinned))
    res = eliminate(sys)
    if not res.consistent:
        return [], "inconsistent"
    if not res.free_cols:
        return [res.solution], ""
    null = res.null_basis
    ineqs = []
    for k, arc in enumerate(support):
        col = 2 * n + k
        coeff = [vec[col] for vec in null]
        if any(coeff):
            ineqs.append((res.solution[col], coeff))
    tight_set = set(tight)
    for (i, j), u in int_u.items():
        if (i, j) in tight_set:
            continue
        c = res.solution[j] - u * res.solution[n + i]
        coeff = [vec[j] - u * vec[n + i] for vec in null]
        if any(coeff):
            ineqs.append((c, coeff))
    for i in range(n):
        coeff = [vec[i] for vec in null]
        if any(coeff):
            ineqs.append((res.solution[i], coeff))
    return [_expand_free(res, t) for t in _vertex_candidates(res, ineqs)], ""


def rationalize(point: CPPoint, market: Market) -> RationalSolution:
    """Round a near-optimal numeric point to an exact rational optimum.

    For each threshold combination: classify the active constraints, solve
    the binding equality system exactly, and verify the candidate against
    every original constraint.  Two repairs run inside each attempt:
    underdetermined systems (tied utilities, disconnected supports) walk
    the vertices of their free-parameter polytope, and when the solved
    prices violate an unclassified arc uniformly, that arc is a tie that
    provably binds and the system is re-solved with it.  Raises
    RoundingFailedError with per-attempt diagnostics when nothing passes.
    """
    int_market, _ = scale_to_integer_utilities(market)
    int_u = {arc: int(v) for arc, v in int_market.u.items()}
    diagnostics = []
    for eps_t, eps_y in THRESHOLD_SCHEDULE:
        label = f"eps_t={eps_t:g}, eps_y={eps_y:g}"
        try:
            ts = detect_tight_set(point, market, eps_y=eps_y, eps_t=eps_t)
        except InconsistentTightSetError as exc:
            diagnostics.append(f"{label}: {exc}")
            continue
        out_ok = {i: False for i in range(market.n)}
        in_ok = {j: False for j in range(market.n)}
        for (i, j) in ts.support:
            out_ok[i] = True
            in_ok[j] = True
        if not (all(out_ok.values()) and all(in_ok.values())):
            diagnostics.append(f"{label}: support does not cover every agent/good")
            continue
        tight_out = {i for (i, _) in ts.tight_bpb}
        if len(tight_out) < market.n:
            diagnostics.append(f"{label}: some agent has no tight arc")
            continue

        # unresolved ties: if the solved prices violate an unclassified arc,
        # some such arc binds at the optimum; search one addition at a time
        stack = [frozenset(ts.tight_bpb)]
        seen = set()
        budget = 40
        reason = "candidate failed exact verification"
        found = None
        while stack and budget > 0 and found is None:
            tight = set(stack.pop())
            if frozenset(tight) in seen:
                continue
            seen.add(frozenset(tight))
            budget -= 1
            pinned = set(ts.tight_prices)
            for comp in _scale_components(market.n, set(ts.support) | tight):
                if not pinned.intersection(comp):
                    # pin the component's numerically smallest price to 1
                    k = min(comp, key=lambda i: (float(point.p[i]), i))
                    pinned.add(k)
            candidates, err = _binding_candidates(
                market.n, int_u, ts.support, tight, pinned
            )
            if err:
                reason = f"binding system {err}"
                continue
            for vec in candidates:
                cand = _candidate_from_solution(vec, market.n, ts.support, market)
                if cand is not None:
                    found = cand
                    break
            if found is not None:
                break
            grow = []
            if candidates:
                base = candidates[0]
                for (i, j), u in int_u.items():
                    if (i, j) in tight:
                        continue
                    viol = u * base[market.n + i] - base[j]
                    if viol > 0:
                        grow.append((viol, (i, j)))
            grow.sort(reverse=True)
            for _, arc in reversed(grow[:3]):
                stack.append(frozenset(tight | {arc}))
        if found is not None:
            return found
        diagnostics.append(f"{label}: {reason}")
    raise RoundingFailedError(
        "exact rounding failed for every threshold combination",
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Support sparsification (cycle cancelling)
# ---------------------------------------------------------------------------

def _find_bipartite_cycle(n, arcs):
    """A cycle of the undirected bipartite (buyer, good) graph whose edges
    are the given arcs, returned as an edge walk (consecutive edges share a
    node), or None when the graph is a forest.  Buyer i is node i, good j
    is node n + j."""
    adj = {}
    for (i, j) in arcs:
        adj.setdefault(i, []).append((n + j, (i, j)))
        adj.setdefault(n + j, []).append((i, (i, j)))

    def tree_path(parent, v):
        out = []
        while parent[v][0] is not None:
            u, arc = parent[v]
            out.append(arc)
            v = u
        return out

    discovered = set()
    for root in sorted(adj):
        if root in discovered:
            continue
        parent = {root: (None, None)}
        discovered.add(root)
        stack = [root]
        while stack:
            v = stack.pop()
            for (w, arc) in adj[v]:
                if arc == parent[v][1]:
                    continue
                if w in parent:
                    # close the walk: cross edge, then w's tree path up to
                    # the meeting point, then back down to v
                    path_v = tree_path(parent, v)
                    path_w = tree_path(parent, w)
                    while path_v and path_w and path_v[-1] == path_w[-1]:
                        path_v.pop()
                        path_w.pop()
                    return [arc] + path_w + list(reversed(path_v))
                parent[w] = (v, arc)
                discovered.add(w)
                stack.append(w)
    return None


def sparsify_support(eq: Equilibrium, market: Market) -> Equilibrium:
    """Cancel spending cycles until the support is a forest of the bipartite
    (buyer, good) graph, hence at most 2n-1 arcs.

    Around a cycle, adding +eps and -eps to alternating edges preserves
    every row and column sum; choosing eps as the smallest decremented flow
    zeroes at least one arc per round.  Prices are untouched, all remaining
    spending stays on bang-per-buck arcs, so the result is an equilibrium
    with the same prices and utilities.
    """
    if not eq.exact:
        raise ValueError("sparsification operates on exact equilibria")
    from .errors import VerificationFailedError

    if not verify_equilibrium(eq, market).ok:
        raise VerificationFailedError("input equilibrium does not verify")
    y = {arc: val for arc, val in eq.y.items() if val > 0}
    while True:
        cycle = _find_bipartite_cycle(market.n, list(y))
        if cycle is None:
            break
        signs = [1 if k % 2 == 0 else -1 for k in range(len(cycle))]
        eps = min(y[arc] for arc, s in zip(cycle, signs) if s < 0)
        for arc, s in zip(cycle, signs):
            y[arc] += s * eps
        y = {arc: val for arc, val in y.items() if val > 0}
    x = {arc: val / eq.p[arc[1]] for arc, val in y.items()}
    return make_equilibrium(eq.p, x, market, exact=True)


# ---------------------------------------------------------------------------
# Brute-force oracle for small markets
# ---------------------------------------------------------------------------

def _vertex_candidates(res, inequalities, combo_cap=2000):
    """Vertices of {t : c_k + a_k . t >= 0} in the free-parameter space of an
    underdetermined binding system, plus t = 0 and the vertex centroid.

    ``inequalities`` is a list of (c, coeff-list) Fractions.  Enumerates
    subsets of size d = #free parameters, solving each as an equality
    system; combinatorial but the oracle only runs on desk-size instances.
    """
    d = len(res.free_cols)
    combos = list(combinations(range(len(inequalities)), d))
    if len(combos) > combo_cap:
        combos = combos[:combo_cap]
    points = [tuple(Fraction(0) for _ in range(d))]
    vertices = []
    for combo in combos:
        sys = LinearSystem(d)
        for k in combo:
            c, coeff = inequalities[k]
            sys.add_row(coeff, -c)
        sub = eliminate(sys)
        if not sub.consistent or sub.free_cols:
            continue
        t = tuple(sub.solution)
        feasible = True
        for c, coeff in inequalities:
            val = c + sum(a * tv for a, tv in zip(coeff, t))
            if val < 0:
                feasible = False
                break
        if feasible:
            vertices.append(t)
    points.extend(vertices)
    if vertices:
        d_inv = Fraction(1, len(vertices))
        centroid = tuple(
            sum(v[k] for v in vertices) * d_inv for k in range(d)
        )
        points.append(centroid)
    seen = set()
    unique = []
    for t in points:
        if t not in seen:
            seen.add(t)
            unique.append(t)
    return unique


def _expand_free(res, t):
    sol = list(res.solution)
    for vec, tv in zip(res.null_basis, t):
        if tv:
            sol = [s + tv * v for s, v in zip(sol, vec)]
    return sol


def oracle_solve(
    market: Market,
    max_arcs: int = 12,
    max_agents: int = 4,
    forest_only: bool = False,
) -> list[RationalSolution]:
    """Enumerate equilibria by candidate spending supports; ground truth for
    desk-size instances (independent of the numeric solver).

    For each support where every agent keeps an out-arc and every good an
    in-arc, the balance equations, the tight bang-per-buck equations on the
    support, and the normalization p_0 = 1 are solved exactly; candidates
    must then satisfy the off-support inequalities and the full equilibrium
    conditions exactly.  Underdetermined systems (disconnected supports,
    tied utilities) are resolved by enumerating the vertices of their free-
    parameter polytope.  ``forest_only`` restricts to forest supports, which
    is enough to find every extreme equilibrium: spending cycles can always
    be cancelled without changing prices.
    """
    n = market.n
    if n > max_agents:
        raise SizeLimitError(f"oracle capped at {max_agents} agents (got {n})")
    base_arcs = flow_support(market).arcs
    if len(base_arcs) > max_arcs:
        raise SizeLimitError(
            f"oracle capped at {max_arcs} candidate arcs (got {len(base_arcs)})"
        )

    int_market, _ = scale_to_integer_utilities(market)
    int_u = {arc: int(v) for arc, v in int_market.u.items()}
    m = len(base_arcs)
    out_bit = [1 << arc[0] for arc in base_arcs]
    in_bit = [1 << arc[1] for arc in base_arcs]
    full = (1 << n) - 1
    max_support = 2 * n - 1 if forest_only else m

    solutions = {}
    for mask in range(1, 1 << m):
        if mask.bit_count() > max_support:
            continue
        out_cover = 0
        in_cover = 0
        for k in range(m):
            if mask >> k & 1:
                out_cover |= out_bit[k]
                in_cover |= in_bit[k]
        if out_cover != full or in_cover != full:
            continue
        support = [base_arcs[k] for k in range(m) if mask >> k & 1]
        if forest_only and _find_bipartite_cycle(n, support) is not None:
            continue

        candidates, err = _binding_candidates(n, int_u, support, set(support), [0])
        if err:
            continue
        for sol in candidates:
            cand = _candidate_from_solution(sol, n, support, market)
            if cand is not None:
                solutions.setdefault(cand.sort_key(), cand)

    return [solutions[k] for k in sorted(solutions)]

