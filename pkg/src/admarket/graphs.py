"""Graph analysis of the utility digraph.

Existence of an equilibrium reduces to a purely combinatorial condition:
every singleton strongly connected component must carry a self-loop.  This
module decides that condition, cross-checks it against the subset-based
(super) self-sufficiency criterion, identifies the arcs that can carry flow
at all, and builds an interior feasible starting point from a cycle cover.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .errors import InfeasibleMarketError, NoCycleThroughNodeError, SizeLimitError
from .market import Market
from .program import CPPoint, eliminate_beta, is_feasible


@dataclass(frozen=True)
class SccDecomposition:
    comp: tuple  # component id per node
    components: tuple  # tuple of node tuples, indexed by component id
    dag_edges: frozenset  # (comp_a, comp_b) pairs, comp_a != comp_b


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    witness_node: int | None = None
    witness_set: tuple | None = None

    def to_json_dict(self):
        doc = {"feasible": self.feasible}
        if self.witness_node is not None:
            doc["witness_node"] = self.witness_node
        if self.witness_set is not None:
            doc["witness_set"] = list(self.witness_set)
        return doc


@dataclass(frozen=True)
class FlowSupport:
    """Arcs inside a strongly connected component, i.e. the arcs lying on
    some directed cycle.  Every other arc carries zero in every feasible
    circulation."""

    arcs: tuple


def _adjacency(market: Market):
    adj = [[] for _ in range(market.n)]
    for (i, j) in market.arcs:  # sorted; keeps neighbor order deterministic
        adj[i].append(j)
    return adj


def scc(market: Market) -> SccDecomposition:
    """Tarjan's algorithm, iterative, nodes visited in index order.

    Component ids are renumbered by smallest member so the numbering is a
    function of the graph alone.
    """
    n = market.n
    adj = _adjacency(market)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack = []
    comps = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for k in range(pi, len(adj[v])):
                w = adj[v][k]
                if index[w] == -1:
                    work[-1] = (v, k + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(tuple(sorted(comp)))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])

    comps.sort(key=lambda c: c[0])
    comp_of = [0] * n
    for cid, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = cid
    dag = frozenset(
        (comp_of[i], comp_of[j]) for (i, j) in market.arcs if comp_of[i] != comp_of[j]
    )
    return SccDecomposition(tuple(comp_of), tuple(comps), dag)


def _reachable_from(market: Market, start: int):
    adj = _adjacency(market)
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def check_star_condition(market: Market) -> FeasibilityVerdict:
    """Equilibria exist iff every singleton strongly connected component has
    a loop.  On failure the witness is the offending node k together with
    the set T of nodes reachable from it: agents in T + {k} spend everything
    on goods inside T, which would force p_k = 0."""
    decomp = scc(market)
    for comp in decomp.components:
        if len(comp) == 1:
            k = comp[0]
            if (k, k) not in market.u:
                t = tuple(sorted(_reachable_from(market, k) - {k}))
                return FeasibilityVerdict(False, witness_node=k, witness_set=t)
    return FeasibilityVerdict(True)


def check_super_self_sufficiency(
    market: Market, exhaustive: bool = False, size_cap: int = 12
) -> FeasibilityVerdict:
    """Equilibria exist iff no agent subset is super self-sufficient.

    A set S is self-sufficient when no arc leaves it; super self-sufficient
    when additionally some member k owns a good nobody in S wants (no arc
    from S into k).  The graph criterion above is equivalent, and is used
    unless ``exhaustive`` asks for direct subset enumeration (capped at
    ``size_cap`` agents; the exhaustive mode exists to test the
    equivalence itself).
    """
    n = market.n
    if exhaustive:
        if n > size_cap:
            raise SizeLimitError(f"exhaustive subset mode capped at n={size_cap}")
        out_mask = [0] * n
        in_from = [0] * n  # bitmask of agents that want good k
        for (i, j) in market.u:
            out_mask[i] |= 1 << j
            in_from[j] |= 1 << i
        for s in range(1, 1 << n):
            members = [i for i in range(n) if s >> i & 1]
            if any(out_mask[i] & ~s for i in members):
                continue  # an arc leaves S
            for k in members:
                if not (in_from[k] & s):
                    return FeasibilityVerdict(
                        False, witness_node=k, witness_set=tuple(members)
                    )
        return FeasibilityVerdict(True)

    star = check_star_condition(market)
    if star.feasible:
        return star
    k = star.witness_node
    s = tuple(sorted(set(star.witness_set) | {k}))
    return FeasibilityVerdict(False, witness_node=k, witness_set=s)


def flow_support(market: Market) -> FlowSupport:
    """Arcs whose endpoints share a strongly connected component.

    A feasible circulation decomposes into directed cycles, and every cycle
    stays inside one component, so arcs crossing components carry zero flow
    in every feasible solution.
    """
    decomp = scc(market)
    arcs = tuple(
        (i, j) for (i, j) in market.arcs if decomp.comp[i] == decomp.comp[j]
    )
    return FlowSupport(arcs)


def shortest_cycle_through(market: Market, node: int):
    """Shortest directed cycle through ``node`` as an arc list; BFS with
    neighbors scanned in index order, so ties resolve lexicographically."""
    if (node, node) in market.u:
        return [(node, node)]
    adj = _adjacency(market)
    parent = {node: None}
    queue = deque([node])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w == node:
                arcs = [(v, node)]
                cur = v
                while parent[cur] is not None:
                    arcs.append((parent[cur], cur))
                    cur = parent[cur]
                arcs.reverse()
                return arcs
            if w not in parent:
                parent[w] = v
                queue.append(w)
    raise NoCycleThroughNodeError(f"no directed cycle through node {node}")


def cycle_cover_point(market: Market) -> CPPoint:
    """Feasible interior-ish point from a family of covering cycles.

    Walk the nodes in order; every node not yet on a chosen cycle
    contributes its shortest cycle (a cycle shared by several nodes is
    counted once).  Flows are the sum of the chosen cycles' indicator
    vectors, prices the resulting inflow, and beta the optimal elimination.
    The result is verified exactly before returning.
    """
    verdict = check_star_condition(market)
    if not verdict.feasible:
        raise InfeasibleMarketError(
            f"no equilibrium: node {verdict.witness_node} heads a sink component "
            "without a loop",
            witness_node=verdict.witness_node,
            witness_set=verdict.witness_set,
        )
    n = market.n
    covered = [False] * n
    y = {}
    for node in range(n):
        if covered[node]:
            continue
        arcs = shortest_cycle_through(market, node)
        for (i, j) in arcs:
            y[(i, j)] = y.get((i, j), Fraction(0)) + 1
            covered[i] = True
    p = [Fraction(0)] * n
    for (_, j), val in y.items():
        p[j] += val
    beta = eliminate_beta(p, market)
    point = CPPoint(tuple(p), y, tuple(beta), exact=True)
    ok, report = is_feasible(point, market, 0)
    if not ok:
        raise NoCycleThroughNodeError(f"cycle cover produced an infeasible point: {report}")
    return point.with_objective(market)
