"""``valobj`` command line: run, check, properties, reduce.

Exit status: 0 pass, 1 property failure (or no witness / liveness failure),
2 usage, parse, configuration or budget error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from typing import Any, Dict, List, Optional, Sequence

from . import scenario as scenario_io
from .applications import default_universe, make_spec
from .checkers import BudgetExceeded, check_persistent_execution, check_persistent_validity, check_regular, check_total
from .core import ConfigurationError, MalformedRunError, format_uid
from .kernel import Schedule, parse_crash
from .reduction import explore_consensus, find_reduction_witness
from .sim import RunResult, explore_runs, run, spec_for_trace
from .traceio import TraceParseError, format_result, read_trace, write_trace

OK, FAILED, ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args: argparse.Namespace, text_lines: Sequence[str], payload: Dict[str, Any]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    else:
        for line in text_lines:
            print(line)


def _op_lines(result: RunResult) -> List[str]:
    inv = result.trace.invocations()
    lines = []
    for uid, e in sorted(result.trace.responses().items()):
        lines.append(f"{format_uid(uid)} {inv[uid].payload} {format_result(e.payload)}")
    return lines


def _run_payload(result: RunResult) -> Dict[str, Any]:
    inv = result.trace.invocations()
    return {
        "ops": [
            {"uid": format_uid(uid), "op": str(inv[uid].payload), "result": format_result(e.payload)}
            for uid, e in sorted(result.trace.responses().items())
        ],
        "summary": result.summary(),
        "crashed": result.crashed,
        "stuck": result.stuck,
    }


def cmd_run(args: argparse.Namespace) -> int:
    sc, schedule = scenario_io.read_scenario(args.scenario)
    plan = tuple(parse_crash(c) for c in args.crash) if args.crash else schedule.crash_plan
    schedule = Schedule(
        seed=args.seed if args.seed is not None else schedule.seed,
        exhaustive=args.exhaustive or schedule.exhaustive,
        budget=args.budget if args.budget is not None else schedule.budget,
        crash_plan=plan,
    )
    if schedule.exhaustive:
        return _run_exhaustive(args, sc, schedule)
    result = run(sc, schedule)
    if args.trace_out:
        write_trace(result.trace, args.trace_out)
    if sc.impl == "consensus":
        out = result.consensus
        decisions = {str(p): v for p, v in sorted(out.decisions.items())}
        lines = [f"p{p} decides {v}" for p, v in decisions.items()]
        lines.append(f"witness {out.witness.describe()}")
        _emit(args, lines, {"decisions": decisions, "crashed": result.crashed, "stuck": result.stuck})
    else:
        lines = _op_lines(result) + [result.summary()]
        if result.crashed:
            lines.append("crashed: " + ",".join(f"p{p}" for p in result.crashed))
        _emit(args, lines, _run_payload(result))
    if result.stuck:
        print("stuck: " + ", ".join(result.stuck), file=sys.stderr)
        return FAILED
    return OK


def _run_exhaustive(args: argparse.Namespace, sc, schedule: Schedule) -> int:
    if sc.impl == "consensus":
        raise UsageError("use `valobj reduce` for exhaustive consensus exploration")
    ex = explore_runs(sc, budget=schedule.budget)
    table: Counter = Counter()
    stuck = 0
    for result in ex.outcomes:
        key = " ".join(f"{format_uid(u)}={format_result(e.payload)}" for u, e in sorted(result.trace.responses().items()))
        table[key or "(no ops)"] += 1
        stuck += bool(result.stuck)
    lines = [f"{count:6d}  {key}" for key, count in sorted(table.items())]
    lines.append(f"{ex.branches} branches, {len(table)} distinct outcomes" + ("" if ex.complete else " (budget exhausted)"))
    _emit(args, lines, {
        "branches": ex.branches,
        "complete": ex.complete,
        "outcomes": [{"results": k, "count": c} for k, c in sorted(table.items())],
        "stuck": stuck,
    })
    if not ex.complete:
        return ERROR
    return FAILED if stuck else OK


def cmd_check(args: argparse.Namespace) -> int:
    trace = read_trace(args.trace)
    spec = spec_for_trace(args.spec, trace)
    checker = check_regular if args.mode == "regular" else check_total
    report = checker(trace, spec, budget=args.budget)
    payload = report.to_dict()
    payload["mode"] = args.mode
    _emit(args, [report.describe()], payload)
    return OK if report.passed else FAILED


def _universe(args: argparse.Namespace):
    return default_universe(args.spec, processes=args.processes, copies=args.copies)


def cmd_properties(args: argparse.Namespace) -> int:
    if args.depth < 1:
        raise UsageError("--depth must be at least 1")
    spec = make_spec(args.spec)
    universe = _universe(args)
    pv = check_persistent_validity(spec, universe, args.depth)
    pe = check_persistent_execution(spec, universe, args.depth) if pv.passed else pv
    lines = [f"PV {pv.describe()}", f"PE {pe.describe()}"]
    _emit(args, lines, {"pv": pv.to_dict(), "pe": pe.to_dict(), "depth": args.depth})
    return OK if pv.passed and pe.passed else FAILED


def cmd_reduce(args: argparse.Namespace) -> int:
    spec = make_spec(args.spec)
    proposals = [p.strip() for p in args.proposals.split(",")]
    if len(proposals) != args.processes:
        raise UsageError(f"need {args.processes} proposals, got {len(proposals)}")
    witness = find_reduction_witness(spec, _universe(args), args.depth)
    if witness is None:
        _emit(args, [f"no witness up to length {args.depth}: spec has bounded persistent validity"],
              {"witness": None, "depth": args.depth})
        return FAILED
    ex = explore_consensus("n", witness, proposals, f=args.f, budget=args.budget)
    report = [o.line(n) for n, o in enumerate(ex.outcomes)]
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in report))
    verdicts = {
        "agreement": all(o.agreement for o in ex.outcomes),
        "validity": all(o.validity for o in ex.outcomes),
        "termination": all(o.termination for o in ex.outcomes),
    }
    lines = [f"witness {witness.describe()}"]
    lines += [f"{name} {'PASS' if ok else 'FAIL'}" for name, ok in verdicts.items()]
    allok = all(verdicts.values())
    lines.append(f"{ex.branches} branches, {'all AGREE' if allok else 'VIOLATION'}" + ("" if ex.complete else " (budget exhausted)"))
    _emit(args, lines, {
        "witness": witness.describe(),
        "branches": ex.branches,
        "complete": ex.complete,
        **verdicts,
    })
    if not ex.complete:
        return ERROR
    return OK if allok else FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valobj", description="Validated object simulator and checkers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_json(p: argparse.ArgumentParser) -> None:
        p.add_argument("--json", action="store_true", help="print a JSON report instead of text")

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--budget", type=int)
    p.add_argument("--crash", action="append", metavar="P@STEP")
    p.add_argument("--trace-out", metavar="PATH")
    add_json(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="check a trace file")
    p.add_argument("trace")
    p.add_argument("--spec", required=True)
    p.add_argument("--mode", choices=("regular", "total"), default="regular")
    p.add_argument("--budget", type=int, default=10)
    add_json(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("properties", help="bounded persistent validity / execution check")
    p.add_argument("spec")
    p.add_argument("--processes", type=int, default=2)
    p.add_argument("--copies", type=int, default=2)
    p.add_argument("--depth", type=int, default=4)
    add_json(p)
    p.set_defaults(func=cmd_properties)

    p = sub.add_parser("reduce", help="exhaustively run the consensus reduction")
    p.add_argument("spec")
    p.add_argument("--proposals", default="a,b,c")
    p.add_argument("--processes", type=int, default=3)
    p.add_argument("--copies", type=int, default=2)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--f", type=int, default=1)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--report", metavar="PATH")
    add_json(p)
    p.set_defaults(func=cmd_reduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ERROR if exc.code else OK
    try:
        return args.func(args)
    except TraceParseError as exc:
        print(f"{getattr(args, 'scenario', None) or getattr(args, 'trace', '')}: {exc}", file=sys.stderr)
        return ERROR
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return ERROR
    except (UsageError, ConfigurationError, MalformedRunError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
