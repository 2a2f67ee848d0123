"""Market instances: bijective markets, general exchange markets, their
validation, serialization, and the general-to-bijective reduction.

A bijective market has one agent per good: agent i arrives with one
divisible unit of good i.  Utilities live on the arcs of a digraph over the
agents; a zero utility means the arc is absent.  A general market has
separate agent and good sets with arbitrary non-negative endowments; it is
reduced to a bijective market by renaming each (owner, good) occurrence and
splitting agents into one copy per endowed good.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

import numpy as np

from .errors import MarketFormatError
from .rationals import format_rational, parse_rational


@dataclass(frozen=True)
class Market:
    """Bijective market: ``n`` agents, arc utilities ``u[(i, j)] > 0``.

    Loops (i, i) are allowed.  Immutable after construction; all derived
    structure is cached lazily.
    """

    n: int
    u: dict[tuple[int, int], Fraction]

    def __post_init__(self):
        if self.n < 1:
            raise MarketFormatError("market needs at least one agent")
        clean = {}
        for (i, j), val in self.u.items():
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise MarketFormatError(f"arc ({i},{j}) out of range for n={self.n}")
            val = Fraction(val)
            if val <= 0:
                raise MarketFormatError(f"arc ({i},{j}) has non-positive utility {val}")
            clean[(i, j)] = val
        object.__setattr__(self, "u", clean)

    @property
    def arcs(self):
        """Arc keys in deterministic (row, column) order."""
        return sorted(self.u)

    def out_arcs(self, i):
        return [(a, b) for (a, b) in self.arcs if a == i]

    def in_arcs(self, j):
        return [(a, b) for (a, b) in self.arcs if b == j]

    def utility_matrix(self):
        """Dense n x n Fraction matrix, zeros for absent arcs."""
        mat = [[Fraction(0)] * self.n for _ in range(self.n)]
        for (i, j), val in self.u.items():
            mat[i][j] = val
        return mat

    def float_matrix(self):
        mat = np.zeros((self.n, self.n))
        for (i, j), val in self.u.items():
            mat[i, j] = float(val)
        return mat

    def is_integer(self):
        return all(val.denominator == 1 for val in self.u.values())

    def max_utility(self):
        return max(self.u.values())


@dataclass(frozen=True)
class GeneralMarket:
    """General exchange market: ``agents`` x ``goods`` utilities and
    endowments.  ``w[i][g]`` is the quantity of good g initially held by
    agent i."""

    agents: int
    goods: int
    u: tuple  # agents x goods, Fractions
    w: tuple  # agents x goods, Fractions

    @staticmethod
    def from_rows(u_rows, w_rows):
        a = len(u_rows)
        g = len(u_rows[0]) if a else 0
        u = tuple(tuple(Fraction(v) for v in row) for row in u_rows)
        w = tuple(tuple(Fraction(v) for v in row) for row in w_rows)
        if any(len(row) != g for row in u) or len(w) != a or any(len(row) != g for row in w):
            raise MarketFormatError("utility/endowment shapes disagree")
        if any(v < 0 for row in u for v in row) or any(v < 0 for row in w for v in row):
            raise MarketFormatError("utilities and endowments must be non-negative")
        return GeneralMarket(a, g, u, w)

    def validate(self):
        """Return the list of violated invariants (empty when valid)."""
        problems = []
        for g in range(self.goods):
            if sum(self.w[i][g] for i in range(self.agents)) <= 0:
                problems.append(f"good {g} has zero total endowment")
        for i in range(self.agents):
            if sum(self.w[i]) <= 0:
                problems.append(f"agent {i} holds no good")
            if sum(self.u[i]) <= 0:
                problems.append(f"agent {i} values no good")
        return problems


@dataclass(frozen=True)
class ValidationReport:
    """Violated invariants of a bijective market; empty means valid."""

    problems: tuple

    @property
    def ok(self):
        return not self.problems


def validate(market: Market) -> ValidationReport:
    """Check the standing assumptions: positive utilities are structural
    (enforced at construction), so this reports agents missing an incoming
    or outgoing arc."""
    problems = []
    has_out = [False] * market.n
    has_in = [False] * market.n
    for (i, j) in market.u:
        has_out[i] = True
        has_in[j] = True
    for i in range(market.n):
        if not has_out[i]:
            problems.append(f"agent {i} has no outgoing arc")
        if not has_in[i]:
            problems.append(f"agent {i} has no incoming arc")
    return ValidationReport(tuple(problems))


def scale_to_integer_utilities(market: Market):
    """Clear denominators row by row.

    Each agent's utility row is multiplied by the lcm of its denominators;
    row scaling leaves the equilibrium set unchanged, so the integer market
    is interchangeable with the original for price/allocation purposes.
    Returns (integer market, per-row factors).
    """
    factors = []
    for i in range(market.n):
        dens = [market.u[a].denominator for a in market.arcs if a[0] == i]
        factors.append(Fraction(lcm(*dens)) if dens else Fraction(1))
    scaled = {(i, j): val * factors[i] for (i, j), val in market.u.items()}
    return Market(market.n, scaled), factors


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def market_to_json_dict(market: Market) -> dict:
    util = [[0] * market.n for _ in range(market.n)]
    for (i, j), val in market.u.items():
        util[i][j] = format_rational(val)
    return {"kind": "bijective", "agents": market.n, "utilities": util}


def general_to_json_dict(gm: GeneralMarket) -> dict:
    return {
        "kind": "general",
        "agents": gm.agents,
        "goods": gm.goods,
        "utilities": [[format_rational(v) for v in row] for row in gm.u],
        "endowments": [[format_rational(v) for v in row] for row in gm.w],
    }


def parse_instance(doc):
    """Parse an instance JSON document (dict) into a Market or GeneralMarket."""
    if not isinstance(doc, dict):
        raise MarketFormatError("instance document must be a JSON object")
    kind = doc.get("kind")
    if kind == "bijective":
        try:
            n = int(doc["agents"])
            rows = doc["utilities"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MarketFormatError(f"bad bijective instance: {exc}") from exc
        if len(rows) != n or any(len(r) != n for r in rows):
            raise MarketFormatError("utilities must be an n x n matrix")
        u = {}
        for i in range(n):
            for j in range(n):
                try:
                    val = parse_rational(rows[i][j])
                except ValueError as exc:
                    raise MarketFormatError(f"bad utility at ({i},{j}): {exc}") from exc
                if val < 0:
                    raise MarketFormatError(f"negative utility at ({i},{j})")
                if val > 0:
                    u[(i, j)] = val
        return Market(n, u)
    if kind == "general":
        try:
            a = int(doc["agents"])
            g = int(doc["goods"])
            u_rows = doc["utilities"]
            w_rows = doc["endowments"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MarketFormatError(f"bad general instance: {exc}") from exc
        if len(u_rows) != a or len(w_rows) != a:
            raise MarketFormatError("utilities/endowments must have one row per agent")
        try:
            u = [[parse_rational(v) for v in row] for row in u_rows]
            w = [[parse_rational(v) for v in row] for row in w_rows]
        except ValueError as exc:
            raise MarketFormatError(str(exc)) from exc
        if any(len(r) != g for r in u) or any(len(r) != g for r in w):
            raise MarketFormatError("rows must have one entry per good")
        return GeneralMarket.from_rows(u, w)
    raise MarketFormatError(f"unknown instance kind: {kind!r}")


def load_instance(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MarketFormatError(f"{path}: invalid JSON: {exc}") from exc
    return parse_instance(doc)


def save_instance(obj, path):
    doc = market_to_json_dict(obj) if isinstance(obj, Market) else general_to_json_dict(obj)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# General -> bijective reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackMap:
    """Mapping from reduced-market nodes back to (agent, good) pairs.

    ``copies[k] = (agent, good, quantity)``: node k of the reduced market
    owns one unit of a renamed good standing for ``quantity`` physical units
    of ``good``, originally endowed to ``agent``.
    """

    agents: int
    goods: int
    copies: tuple  # tuple of (agent, good, Fraction quantity)

    def to_json_dict(self):
        return {
            "agents": self.agents,
            "goods": self.goods,
            "copies": [
                {"agent": a, "good": g, "quantity": format_rational(q)}
                for (a, g, q) in self.copies
            ],
        }

    @staticmethod
    def from_json_dict(doc):
        copies = tuple(
            (int(c["agent"]), int(c["good"]), parse_rational(c["quantity"]))
            for c in doc["copies"]
        )
        return BackMap(int(doc["agents"]), int(doc["goods"]), copies)


def reduce_to_bijective(gm: GeneralMarket):
    """Split each agent into one copy per endowed good.

    Copy nodes are ordered by (good, owner) so relabeling is reproducible.
    The copy owns one unit of a renamed good whose physical quantity is
    w[a][g]; buyer copies value that unit at u[buyer_agent][g] * w[a][g]
    (endowment size folded into the unit).  Every copy of one agent keeps
    the agent's utility row.
    """
    problems = gm.validate()
    if problems:
        raise MarketFormatError("; ".join(problems))
    copies = []
    for g in range(gm.goods):
        for a in range(gm.agents):
            if gm.w[a][g] > 0:
                copies.append((a, g, gm.w[a][g]))
    index_of = {(a, g): k for k, (a, g, _) in enumerate(copies)}
    n = len(copies)
    u = {}
    for k_buy, (a_buy, _, _) in enumerate(copies):
        for k_sell, (_, g_sell, q_sell) in enumerate(copies):
            val = gm.u[a_buy][g_sell] * q_sell
            if val > 0:
                u[(k_buy, k_sell)] = val
    bm = BackMap(gm.agents, gm.goods, tuple(copies))
    return Market(n, u), bm


@dataclass(frozen=True)
class GeneralEquilibrium:
    """Equilibrium of a general market in physical units.

    ``prices[g]`` is the per-unit price of good g; ``x[(i, j, g)]`` the
    amount of good g sold by agent j to agent i.  Values are Fractions in
    exact mode, floats otherwise.
    """

    prices: tuple
    x: dict
    exact: bool

    def utilities(self, gm: GeneralMarket):
        out = []
        for i in range(gm.agents):
            tot = sum(
                gm.u[i][g] * q if self.exact else float(gm.u[i][g]) * q
                for (bi, _, g), q in self.x.items()
                if bi == i
            )
            out.append(tot if tot else (Fraction(0) if self.exact else 0.0))
        return out


def aggregate_back(eq, bm: BackMap, gm: GeneralMarket, tol=1e-9):
    """Map a reduced-market equilibrium back to (agent, good) space.

    The price of a copy is for its whole lot; dividing by the lot quantity
    gives the physical per-unit price, which must agree across every copy of
    one good.  Disagreement beyond tolerance raises AggregationMismatchError
    rather than averaging: it signals a bug or a degenerate instance.
    """
    from .errors import AggregationMismatchError

    exact = eq.exact
    unit_prices = [None] * bm.goods
    for k, (_, g, q) in enumerate(bm.copies):
        price_k = eq.p[k] / q if exact else float(eq.p[k]) / float(q)
        if unit_prices[g] is None:
            unit_prices[g] = price_k
        else:
            ref = unit_prices[g]
            if exact:
                if price_k != ref:
                    raise AggregationMismatchError(
                        f"good {g}: copy prices {ref} vs {price_k} disagree"
                    )
            else:
                scale = max(1.0, abs(ref))
                if abs(price_k - ref) > tol * scale:
                    raise AggregationMismatchError(
                        f"good {g}: copy prices {ref} vs {price_k} disagree"
                    )
    x = {}
    for (kb, ks), amount in eq.x.items():
        if not amount:
            continue
        a_buy = bm.copies[kb][0]
        _, g, q = bm.copies[ks]
        seller = bm.copies[ks][0]
        key = (a_buy, seller, g)
        physical = amount * q if exact else float(amount) * float(q)
        x[key] = x.get(key, Fraction(0) if exact else 0.0) + physical
    return GeneralEquilibrium(tuple(unit_prices), x, exact)


def verify_general_equilibrium(gm: GeneralMarket, geq: GeneralEquilibrium, tol=1e-6):
    """Check the four general-market equilibrium conditions.

    Returns a dict of worst violations keyed by condition family; all zero
    (or below tol in numeric mode) means the equilibrium verifies.
    """
    exact = geq.exact
    zero = Fraction(0) if exact else 0.0
    p = geq.prices

    def worst(vals):
        vals = list(vals)
        return max(vals) if vals else zero

    # every good of every agent fully sold
    sold = {}
    for (i, j, g), q in geq.x.items():
        sold[(j, g)] = sold.get((j, g), zero) + q
    clearing = []
    for j in range(gm.agents):
        for g in range(gm.goods):
            want = gm.w[j][g] if exact else float(gm.w[j][g])
            got = sold.get((j, g), zero)
            clearing.append(abs(got - want))
    # budget balance
    budget = []
    for i in range(gm.agents):
        spent = sum(q * p[g] for (bi, _, g), q in geq.x.items() if bi == i)
        income = sum(
            (gm.w[i][g] if exact else float(gm.w[i][g])) * p[g] for g in range(gm.goods)
        )
        budget.append(abs(spent - income))
    # best bang per buck
    bpb = []
    for i in range(gm.agents):
        rates = [
            (gm.u[i][g] if exact else float(gm.u[i][g])) / p[g] for g in range(gm.goods)
        ]
        best = max(rates)
        for (bi, _, g), q in geq.x.items():
            if bi == i and q > (zero if exact else tol):
                bpb.append(best - rates[g])
    positive = min(p) > 0
    report = {
        "clearing": worst(clearing),
        "budget": worst(budget),
        "bang_per_buck": worst(bpb),
        "positive_prices": positive,
    }
    scale = max(1.0, max(float(v) for v in p))
    threshold = 0 if exact else tol * scale
    report["ok"] = (
        positive
        and float(report["clearing"]) <= threshold
        and float(report["budget"]) <= threshold
        and float(report["bang_per_buck"]) <= (0 if exact else tol)
    )
    return report
