"""Command-line front end.

Pipeline commands print exactly one JSON document on stdout; anything meant
for humans goes to stderr.  Exit codes: 0 success, 1 usage/IO error,
2 infeasible market, 3 solver non-convergence, 4 verification or
rationalization failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from .duality import self_dual_certificate, verify_cpc, verify_cpd, verify_cpj, verify_kkt
from .equilibrium import (
    embed_equilibrium,
    equilibrium_from_json_dict,
    equilibrium_to_json_dict,
    verify_equilibrium,
)
from .errors import (
    AdmarketError,
    InfeasibleMarketError,
    MarketFormatError,
    RoundingFailedError,
    SizeLimitError,
)
from .exact import oracle_solve, rationalize
from .generate import GenSpec, generate
from .graphs import check_star_condition, check_super_self_sufficiency, scc
from .market import (
    BackMap,
    GeneralMarket,
    Market,
    aggregate_back,
    load_instance,
    market_to_json_dict,
    save_instance,
    validate,
    verify_general_equilibrium,
)
from .program import CPPoint, is_feasible
from .rationals import format_float, format_rational
from .solver import SolverConfig, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFICATION = 4


def _emit(doc):
    json.dump(doc, sys.stdout, indent=1)
    sys.stdout.write("\n")


def _say(msg):
    print(msg, file=sys.stderr)


def _point_to_json(point: CPPoint, report=None):
    doc = {
        "prices": [format_float(v) for v in point.p],
        "beta": [format_float(v) for v in point.beta],
        "spending": [
            {"from": i, "to": j, "y": format_float(v)}
            for (i, j), v in sorted(point.y.items())
            if v
        ],
        "objective": format_float(point.objective or 0.0),
    }
    if report is not None:
        doc["report"] = report.to_json_dict()
    return doc


def _rational_to_json(rs):
    return {
        "prices": [str(format_rational(v)) for v in rs.p],
        "beta": [str(format_rational(v)) for v in rs.beta],
        "spending": [
            {"from": i, "to": j, "y": str(format_rational(v))}
            for (i, j), v in sorted(rs.y.items())
        ],
        "allocations": [
            {"agent": i, "good": j, "x": str(format_rational(v))}
            for (i, j), v in sorted(rs.x.items())
        ],
        "denominator_bits": rs.denominator_bits(),
    }


# ---------------------------------------------------------------------------
# Commands (each returns (exit_code, json_document))
# ---------------------------------------------------------------------------

def run_check(path, sss_cap=12):
    market = load_instance(path)
    if isinstance(market, GeneralMarket):
        from .market import reduce_to_bijective

        market, _ = reduce_to_bijective(market)
    report = validate(market)
    star = check_star_condition(market)
    doc = {
        "valid": report.ok,
        "validation_problems": list(report.problems),
        "star": star.to_json_dict(),
    }
    if market.n <= sss_cap:
        sss = check_super_self_sufficiency(market, exhaustive=True)
        doc["super_self_sufficiency"] = sss.to_json_dict()
        doc["verdicts_agree"] = sss.feasible == star.feasible
    return (EXIT_OK if star.feasible else EXIT_INFEASIBLE), doc


def run_solve(path, tol=1e-8, max_iter=500, pmax=1e9, exact=False):
    market = load_instance(path)
    backmap = None
    general = None
    if isinstance(market, GeneralMarket):
        from .market import reduce_to_bijective

        general = market
        market, backmap = reduce_to_bijective(general)
    star = check_star_condition(market)
    if not star.feasible:
        return EXIT_INFEASIBLE, {"infeasible": True, "star": star.to_json_dict()}
    config = SolverConfig(tolerance=tol, max_iterations=max_iter, price_cap=pmax)
    point, report = solve(market, config)
    doc = {"solution": _point_to_json(point, report)}
    if not report.converged:
        doc["error"] = f"solver did not converge: {report.termination}"
        return EXIT_NO_CONVERGENCE, doc
    from .equilibrium import extract_equilibrium

    eq = extract_equilibrium(point, market, tolerance=max(tol, abs(point.objective)))
    ver = verify_equilibrium(eq, market)
    if not ver.ok:
        doc["error"] = "extracted equilibrium failed verification"
        return EXIT_VERIFICATION, doc
    doc["equilibrium"] = equilibrium_to_json_dict(eq)
    cert = self_dual_certificate(eq, market)
    doc["certificate"] = cert.to_json_dict()
    if exact:
        try:
            rs = rationalize(point, market)
        except RoundingFailedError as exc:
            doc["error"] = "rationalization failed"
            doc["rationalization_diagnostics"] = exc.diagnostics
            return EXIT_VERIFICATION, doc
        doc["exact"] = _rational_to_json(rs)
        req = rs.to_equilibrium(market)
        doc["equilibrium"] = equilibrium_to_json_dict(req)
    if general is not None:
        eq_back = rs.to_equilibrium(market) if exact else eq
        geq = aggregate_back(eq_back, backmap, general)
        doc["general_equilibrium"] = {
            "prices": [
                str(format_rational(v)) if geq.exact else format_float(v)
                for v in geq.prices
            ],
            "allocations": [
                {
                    "agent": i,
                    "seller": j,
                    "good": g,
                    "quantity": str(format_rational(v)) if geq.exact else format_float(v),
                }
                for (i, j, g), v in sorted(geq.x.items())
            ],
            "verification": {
                k: (str(v) if geq.exact else format_float(v)) if not isinstance(v, bool) else v
                for k, v in verify_general_equilibrium(general, geq).items()
            },
        }
    return EXIT_OK, doc


def _load_equilibrium_doc(path, market):
    with open(path) as fh:
        doc = json.load(fh)
    if "equilibrium" in doc:
        doc = doc["equilibrium"]
    return equilibrium_from_json_dict(doc, market)


def run_verify(instance_path, solution_path, tol=1e-6):
    market = load_instance(instance_path)
    if isinstance(market, GeneralMarket):
        from .market import reduce_to_bijective

        market, _ = reduce_to_bijective(market)
    try:
        eq = _load_equilibrium_doc(solution_path, market)
    except (KeyError, IndexError, ValueError, AdmarketError) as exc:
        return EXIT_VERIFICATION, {
            "ok": False,
            "error": f"solution does not fit this instance: {exc}",
        }
    families = {}
    ver = verify_equilibrium(eq, market, tol)
    families["equilibrium"] = {
        "clearing": float(ver.clearing),
        "budget": float(ver.budget),
        "bang_per_buck": float(ver.bang_per_buck),
        "positive_prices": ver.positive_prices,
        "ok": ver.ok,
    }
    ok = ver.ok
    if ver.ok:
        point = embed_equilibrium(eq, market)
        feas_ok, feas = is_feasible(point, market, tol)
        families["cp_feasibility"] = {
            "ok": feas_ok,
            **{k: float(v) for k, v in feas.items()},
            "objective": float(point.objective or 0.0),
        }
        cert = self_dual_certificate(eq, market)
        kkt = verify_kkt(point, cert, market, tol=max(1e-9, tol))
        families["kkt_self_dual"] = {"ok": kkt.ok, **{k: float(v) for k, v in kkt.residuals.items()}}
        strongly_connected = len(scc(market).components) == 1
        families["cpj"] = verify_cpj(eq, market, tol) if strongly_connected else None
        families["cpc"] = verify_cpc(eq, market, tol)
        families["cpd_self_dual"] = verify_cpd(cert, market, tol, require_zero_sum=True)
        if eq.exact:
            from .duality import verify_self_dual_exact

            exact_ok, failures = verify_self_dual_exact(eq, market)
            families["kkt_exact"] = {"ok": exact_ok, "failures": failures}
            ok = ok and exact_ok
        ok = (
            ok
            and feas_ok
            and kkt.ok
            and families["cpj"] in (True, None)
            and families["cpc"]
            and families["cpd_self_dual"]
        )
    families["ok"] = bool(ok)
    return (EXIT_OK if ok else EXIT_VERIFICATION), families


def run_rationalize(instance_path, solution_path):
    market = load_instance(instance_path)
    if isinstance(market, GeneralMarket):
        from .market import reduce_to_bijective

        market, _ = reduce_to_bijective(market)
    with open(solution_path) as fh:
        doc = json.load(fh)
    if "solution" in doc:
        doc = doc["solution"]
    try:
        p = tuple(float(v) for v in doc["prices"])
        beta = tuple(float(v) for v in doc["beta"])
        y = {
            (int(e["from"]), int(e["to"])): float(e["y"]) for e in doc["spending"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        return EXIT_USAGE, {"ok": False, "error": f"bad solution document: {exc}"}
    point = CPPoint(p, y, beta, exact=False).with_objective(market)
    try:
        rs = rationalize(point, market)
    except AdmarketError as exc:
        doc = {"ok": False, "error": str(exc)}
        if isinstance(exc, RoundingFailedError):
            doc["diagnostics"] = exc.diagnostics
        return EXIT_VERIFICATION, doc
    return EXIT_OK, {"ok": True, "exact": _rational_to_json(rs)}


def run_oracle(path, max_arcs=12, max_agents=4):
    market = load_instance(path)
    if isinstance(market, GeneralMarket):
        from .market import reduce_to_bijective

        market, _ = reduce_to_bijective(market)
    try:
        sols = oracle_solve(market, max_arcs=max_arcs, max_agents=max_agents)
    except SizeLimitError as exc:
        return EXIT_USAGE, {"error": str(exc)}
    docs = []
    for rs in sols:
        eq = rs.to_equilibrium(market)
        docs.append(equilibrium_to_json_dict(eq))
    return EXIT_OK, {"count": len(docs), "equilibria": docs}


def run_gen(args):
    spec = GenSpec(
        n=args.agents,
        density=args.density,
        u_max=args.umax,
        seed=args.seed,
        mode=args.mode,
    )
    market = generate(spec)
    doc = market_to_json_dict(market)
    if args.output:
        save_instance(market, args.output)
        _say(f"wrote {args.output}")
        return EXIT_OK, {"written": args.output, "agents": market.n, "arcs": len(market.u)}
    return EXIT_OK, doc


def run_reduce(path, instance_out=None, backmap_out=None):
    gm = load_instance(path)
    if isinstance(gm, Market):
        market, bm = gm, None
        doc = {"instance": market_to_json_dict(market), "backmap": None}
        _say("input is already bijective; emitting it unchanged")
    else:
        from .market import reduce_to_bijective

        market, bm = reduce_to_bijective(gm)
        doc = {
            "instance": market_to_json_dict(market),
            "backmap": bm.to_json_dict(),
        }
    if instance_out:
        save_instance(market, instance_out)
    if backmap_out and doc["backmap"] is not None:
        with open(backmap_out, "w") as fh:
            json.dump(doc["backmap"], fh, indent=1)
            fh.write("\n")
    return EXIT_OK, doc


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _pipeline_worker(task):
    name, path, kwargs = task
    try:
        if name == "check":
            return run_check(path, **kwargs)
        if name == "solve":
            return run_solve(path, **kwargs)
        raise ValueError(name)
    except InfeasibleMarketError as exc:
        return EXIT_INFEASIBLE, {"infeasible": True, "error": str(exc)}
    except (MarketFormatError, OSError, json.JSONDecodeError) as exc:
        return EXIT_USAGE, {"error": str(exc)}


def _run_batch(name, paths, jobs, kwargs):
    tasks = [(name, path, kwargs) for path in paths]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_pipeline_worker, tasks))
    else:
        results = [_pipeline_worker(t) for t in tasks]
    if len(paths) == 1:
        code, doc = results[0]
        _emit(doc)
        return code
    _emit([{"instance": p, "result": doc} for p, (_, doc) in zip(paths, results)])
    return max(code for code, _ in results)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="admarket",
        description="Equilibrium computation for linear exchange markets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="decide whether an equilibrium exists")
    p_check.add_argument("instances", nargs="+")
    p_check.add_argument("--jobs", type=int, default=1)

    p_solve = sub.add_parser("solve", help="compute an equilibrium")
    p_solve.add_argument("instances", nargs="+")
    p_solve.add_argument("--tol", type=float, default=1e-8)
    p_solve.add_argument("--max-iter", type=int, default=500)
    p_solve.add_argument("--pmax", type=float, default=1e9)
    p_solve.add_argument("--exact", action="store_true", help="also round to exact rationals")
    p_solve.add_argument("--jobs", type=int, default=1)

    p_verify = sub.add_parser("verify", help="verify a solution file against an instance")
    p_verify.add_argument("instance")
    p_verify.add_argument("solution")
    p_verify.add_argument("--tol", type=float, default=1e-6)

    p_rat = sub.add_parser("rationalize", help="round a numeric solution to exact rationals")
    p_rat.add_argument("instance")
    p_rat.add_argument("solution")

    p_oracle = sub.add_parser("oracle", help="enumerate equilibria of a small instance")
    p_oracle.add_argument("instance")
    p_oracle.add_argument("--max-arcs", type=int, default=12)
    p_oracle.add_argument("--max-agents", type=int, default=4)

    p_gen = sub.add_parser("gen", help="generate a random instance")
    p_gen.add_argument("--agents", type=int, required=True)
    p_gen.add_argument("--density", type=float, default=0.25)
    p_gen.add_argument("--umax", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--mode", choices=["force-star", "raw"], default="force-star")
    p_gen.add_argument("-o", "--output")

    p_red = sub.add_parser("reduce", help="reduce a general market to bijective form")
    p_red.add_argument("instance")
    p_red.add_argument("-o", "--instance-out")
    p_red.add_argument("--backmap-out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            return _run_batch("check", args.instances, args.jobs, {})
        if args.command == "solve":
            return _run_batch(
                "solve",
                args.instances,
                args.jobs,
                dict(tol=args.tol, max_iter=args.max_iter, pmax=args.pmax, exact=args.exact),
            )
        if args.command == "verify":
            code, doc = run_verify(args.instance, args.solution, args.tol)
        elif args.command == "rationalize":
            code, doc = run_rationalize(args.instance, args.solution)
        elif args.command == "oracle":
            code, doc = run_oracle(args.instance, args.max_arcs, args.max_agents)
        elif args.command == "gen":
            code, doc = run_gen(args)
        elif args.command == "reduce":
            code, doc = run_reduce(args.instance, args.instance_out, args.backmap_out)
        else:  # pragma: no cover
            parser.error(f"unknown command {args.command}")
        _emit(doc)
        return code
    except (MarketFormatError, OSError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except InfeasibleMarketError as exc:
        _emit({"infeasible": True, "error": str(exc)})
        return EXIT_INFEASIBLE
    except AdmarketError as exc:
        _say(f"error: {exc}")
        return EXIT_VERIFICATION


if __name__ == "__main__":
    sys.exit(main())
