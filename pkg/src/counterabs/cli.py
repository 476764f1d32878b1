"""Command-line front end.

Exit status: 0 when the property holds / the target is reachable, 1 for a
negative verdict, 2 for errors and exhausted budgets.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

from .budget import Budget, BudgetExceeded
from .constraints import ConstraintClass, ConstraintError, classify, parse_constraint
from .crp import concretize_witness, decide_crp
from .dfa import DfaError, gen_dfa_intersection, intersection_nonempty, load_dfa
from .oracle import check_compatibility, crp_oracle
from .protocol import ProtocolError, ProtocolSyntaxError, load_protocol, serialize_protocol
from .tcs import NotATcs, decide_crp_geq, decide_crp_geq_zero, to_tcs
from .traces import (
    BUCHI,
    SAFETY,
    KindError,
    SpecError,
    check_omega,
    check_safety,
    controller_product,
    load_spec,
)

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2


def _emit(report: dict) -> None:
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _budget(args) -> Budget:
    return Budget.from_env(
        max_states=args.max_states, max_seconds=args.max_seconds, max_population=args.max_population
    )


def cmd_check(args) -> int:
    p = load_protocol(args.protocol)
    phi = parse_constraint(args.constraint, p)
    budget = _budget(args)
    report = {"engine": args.engine, "protocol": p.name, "constraint": str(phi), "class": classify(phi).name}

    if args.engine == "abstract":
        res = decide_crp(p, phi, budget)
        if res.reachable and args.concretize:
            n_max = args.population if args.population is not None else None
            res.concrete = concretize_witness(p, res.abstract_witness, phi, n_max, budget)
        report.update(res.to_json())
        if res.reachable and args.concretize and res.concrete is None:
            report["note"] = "no concrete run found within the population cap"
        reachable = res.reachable
    elif args.engine == "tcs":
        t = to_tcs(p)
        cls = classify(phi)
        if cls is ConstraintClass.GEQ:
            res = decide_crp_geq(t, phi)
        elif cls is ConstraintClass.GEQ_ZERO:
            res = decide_crp_geq_zero(t, phi)
        else:
            raise ConstraintError("the TCS engine does not handle controller atoms")
        report.update(res.to_json())
        reachable = res.reachable
    else:
        cap = args.population if args.population is not None else budget.max_population
        verdict = crp_oracle(p, phi, range(cap + 1), budget)
        report.update({
            "reachable": verdict.aggregated,
            "per_population": {str(n): ok for n, ok in verdict.per_population.items()},
            "smallest": verdict.smallest,
            "note": f"bounded check for populations 0..{cap}",
        })
        reachable = verdict.aggregated
    _emit(report)
    return EXIT_OK if reachable else EXIT_NEGATIVE


def cmd_traces(args) -> int:
    p = load_protocol(args.protocol)
    budget = _budget(args)
    mode = BUCHI if args.omega else SAFETY
    spec = load_spec(args.spec, mode)
    targets = [p]
    if args.track:
        inits = sorted(p.initial_users)
        targets = [controller_product(p, args.track, choice) for choice in itertools.product(inits, repeat=args.track)]
    results = []
    for q in targets:
        res = check_omega(q, spec, budget) if args.omega else check_safety(q, spec, budget)
        results.append((q, res))
        if not res.holds:
            break
    holds = all(r.holds for _, r in results)
    report = {"protocol": p.name, "mode": mode, "holds": holds, "checks": []}
    for q, res in results:
        entry = res.to_json()
        entry["controller"] = q.initial_controller
        report["checks"].append(entry)
    _emit(report)
    return EXIT_OK if holds else EXIT_NEGATIVE


def cmd_tcs_show(args) -> int:
    t = to_tcs(load_protocol(args.protocol))
    sys.stdout.write(t.dump())
    return EXIT_OK


def cmd_gen(args) -> int:
    automata = [load_dfa(f) for f in args.files]
    p, phi = gen_dfa_intersection(automata)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "protocol.proto").write_text(serialize_protocol(p), encoding="utf-8")
    (out / "constraint.txt").write_text(f"{phi}\n", encoding="utf-8")
    _emit({
        "protocol": str(out / "protocol.proto"),
        "constraint": str(out / "constraint.txt"),
        "user_states": len(p.user_states),
        "intersection_nonempty": intersection_nonempty(automata),
    })
    return EXIT_OK


def cmd_compat(args) -> int:
    p = load_protocol(args.protocol)
    report = check_compatibility(p, args.n, budget=_budget(args))
    out = report.to_json()
    out["protocol"] = p.name
    _emit(out)
    return EXIT_OK if not report.violations else EXIT_NEGATIVE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--max-states", type=int, default=None,
                        help="state budget (default 1000000, env COUNTERABS_MAX_STATES)")
    common.add_argument("--max-seconds", type=float, default=None,
                        help="time budget in seconds (default 60, env COUNTERABS_MAX_SECONDS)")
    common.add_argument("--max-population", type=int, default=None,
                        help="oracle population cap (default 8, env COUNTERABS_MAX_POPULATION)")

    parser = argparse.ArgumentParser(prog="counterabs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common], help="cardinality reachability")
    check.add_argument("-p", "--protocol", required=True)
    check.add_argument("-c", "--constraint", required=True)
    check.add_argument("--engine", choices=("abstract", "tcs", "oracle"), default="abstract")
    check.add_argument("--population", type=int, default=None,
                       help="population cap for --concretize and the oracle engine")
    check.add_argument("--concretize", action="store_true", help="search a concrete run for the witness")
    check.set_defaults(func=cmd_check)

    traces = sub.add_parser("traces", parents=[common], help="trace properties of the controller")
    traces.add_argument("-p", "--protocol", required=True)
    traces.add_argument("-s", "--spec", required=True)
    traces.add_argument("--omega", action="store_true",
                        help="infinite traces; the spec is a Buchi automaton for the negated property")
    traces.add_argument("--track", type=int, default=0, metavar="K",
                        help="expose K user processes in the controller")
    traces.set_defaults(func=cmd_traces)

    tcs = sub.add_parser("tcs", help="transition counter systems")
    tcs_sub = tcs.add_subparsers(dest="tcs_command", required=True)
    show = tcs_sub.add_parser("show", help="print the minimal steps")
    show.add_argument("-p", "--protocol", required=True)
    show.set_defaults(func=cmd_tcs_show)

    gen = sub.add_parser("gen", help="instance generators")
    gen_sub = gen.add_subparsers(dest="gen_command", required=True)
    dfa = gen_sub.add_parser("dfa-intersection", help="CRP instance from DFA intersection")
    dfa.add_argument("files", nargs="+")
    dfa.add_argument("-o", "--output", required=True)
    dfa.set_defaults(func=cmd_gen)

    oracle = sub.add_parser("oracle", help="bounded ground truth")
    oracle_sub = oracle.add_subparsers(dest="oracle_command", required=True)
    compat = oracle_sub.add_parser("compat", parents=[common], help="check order compatibility")
    compat.add_argument("-p", "--protocol", required=True)
    compat.add_argument("-n", type=int, required=True)
    compat.set_defaults(func=cmd_compat)
    return parser


_USER_ERRORS = (
    ProtocolSyntaxError,
    ProtocolError,
    ConstraintError,
    SpecError,
    DfaError,
    NotATcs,
    KindError,
    OSError,
    ValueError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"counterabs: budget exhausted: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except _USER_ERRORS as exc:
        print(f"counterabs: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
