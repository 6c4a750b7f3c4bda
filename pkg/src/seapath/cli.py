"""Command-line front end: generate, run, sweep, validate, serve.

Every subcommand is a thin wrapper over the library: generation and runs
print CSV (header first) to stdout and optionally write scenario/solution
files under --out; validate re-checks a saved solution against its
scenario and exits nonzero when it does not hold; serve-worker and
serve-coordinator are the two halves of a distributed run, each loading
the scenario file locally.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .agents import PlanError
from .bench import (
    BenchError,
    generate_scenario,
    load_scenario,
    run_scenario,
    save_scenario,
    solution_from_obj,
    solution_to_obj,
    spec_for_agents,
    sweep,
    validate_solution,
    write_csv,
    BENCH_COLUMNS,
    SWEEP_AXES,
)
from .distrib import DistribError, parse_address, run_coordinator, run_worker
from .highlevel import ALGORITHMS, HEURISTICS, HighLevelError
from .roadnet import RoadNetError

_ALGO_HELP = "planning algorithm"
_HEUR_HELP = "parked-child ordering heuristic (xcbs-a-eff only)"


def _add_algo_flags(p, default_algo="xcbs-la"):
    p.add_argument("--algo", choices=ALGORITHMS, default=default_algo, help=_ALGO_HELP)
    p.add_argument("--heuristic", choices=HEURISTICS, default="deeper", help=_HEUR_HELP)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, _, cols = text.partition("x")
        return int(rows), int(cols)
    except ValueError:
        raise BenchError(f"grid must look like ROWSxCOLS, got {text!r}") from None


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise BenchError(f"expected comma-separated integers, got {text!r}") from None


def _parse_values(axis: str, text: str) -> list:
    parts = [p for p in text.split(",") if p != ""]
    try:
        if axis == "density":
            return [float(p) for p in parts]
        return [int(p) for p in parts]
    except ValueError:
        raise BenchError(f"bad value list for axis {axis!r}: {text!r}") from None


def _parse_band(text: str):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise BenchError(f"band must look like LO:HI in milliseconds, got {text!r}")
    try:
        return int(lo), int(hi)
    except ValueError:
        raise BenchError(f"band must look like LO:HI in milliseconds, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seapath",
        description="Multi-agent route planning for vehicles with physical length.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate scenario files with controlled conflict structure")
    p.add_argument("--grid", default="6x6", help="grid shape ROWSxCOLS (default 6x6)")
    p.add_argument("--agents", type=int, default=4, help="number of agents")
    p.add_argument(
        "--blocks",
        default=None,
        help="comma-separated conflict-cluster sizes summing to --agents "
        "(default: pairs plus a loner)",
    )
    p.add_argument("--band", default=None, help="solo path-time band LO:HI in milliseconds")
    p.add_argument("--density", type=float, default=0.0, help="edge-deletion probability")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--count", type=int, default=1, help="scenarios to generate (seeds base..base+count-1)")
    p.add_argument("--out", default=".", help="directory for scenario files")

    p = sub.add_parser("run", help="solve scenario files and print one CSV row per run")
    p.add_argument("scenarios", nargs="+", help="scenario file paths")
    _add_algo_flags(p)
    p.add_argument("--out", default=None, help="directory for solution files (optional)")

    p = sub.add_parser("sweep", help="run an experiment axis and emit CSV")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated ascending axis values")
    p.add_argument(
        "--algos",
        default=",".join(ALGORITHMS),
        help="comma-separated algorithms (default: all)",
    )
    p.add_argument("--seeds", default="0", help="comma-separated seeds (default: 0)")
    p.add_argument("--heuristic", choices=HEURISTICS, default="deeper", help=_HEUR_HELP)
    p.add_argument("--out", default=None, help="directory for the CSV file (default: stdout only)")

    p = sub.add_parser("validate", help="re-check a saved solution against its scenario")
    p.add_argument("scenario", help="scenario file path")
    p.add_argument("solution", help="solution file path")

    p = sub.add_parser("serve-worker", help="serve plan requests for a scenario's agents")
    p.add_argument("scenario", help="scenario file path (network and roster are loaded locally)")
    p.add_argument("--listen", required=True, help="host:port to listen on (port 0 picks one)")

    p = sub.add_parser("serve-coordinator", help="solve a scenario using remote workers")
    p.add_argument("scenario", help="scenario file path")
    p.add_argument("--workers", required=True, nargs="+", help="worker addresses host:port")
    _add_algo_flags(p)
    p.add_argument("--out", default=None, help="directory for the solution file (optional)")

    return parser


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_gen(args) -> int:
    grid = _parse_grid(args.grid)
    spec = _parse_int_list(args.blocks) if args.blocks is not None else spec_for_agents(args.agents)
    band = _parse_band(args.band) if args.band is not None else None
    out = _ensure_dir(args.out)
    for seed in range(args.seed, args.seed + args.count):
        sc = generate_scenario(
            grid,
            args.agents,
            spec,
            path_len_band=band,
            seed=seed,
            density=args.density,
        )
        path = os.path.join(out, f"scenario-{seed}.json")
        save_scenario(sc, path)
        print(path)
    return 0


def _cmd_run(args) -> int:
    rows = []
    failures = 0
    out = _ensure_dir(args.out) if args.out else None
    for path in args.scenarios:
        sc = load_scenario(path)
        started = time.monotonic()
        row, report = run_scenario(sc, args.algo, heuristic=args.heuristic)
        elapsed = int((time.monotonic() - started) * 1000)
        rows.append(row)
        if row.status != "ok":
            failures += 1
        elif out is not None:
            stem = os.path.splitext(os.path.basename(path))[0]
            dest = os.path.join(out, f"{stem}-{args.algo}-solution.json")
            with open(dest, "w", encoding="ascii") as fh:
                json.dump(solution_to_obj(sc, report, elapsed), fh, sort_keys=True, indent=1)
                fh.write("\n")
    write_csv(sys.stdout, rows)
    return 1 if failures else 0


def _cmd_sweep(args) -> int:
    values = _parse_values(args.axis, args.values)
    algos = [a for a in args.algos.split(",") if a]
    seeds = _parse_int_list(args.seeds)
    rows = sweep(args.axis, values, algorithms=algos, seeds=seeds, heuristic=args.heuristic)
    write_csv(sys.stdout, rows)
    if args.out:
        dest = os.path.join(_ensure_dir(args.out), f"sweep-{args.axis}.csv")
        write_csv(dest, rows)
        print(dest, file=sys.stderr)
    return 1 if any(r.status != "ok" for r in rows) else 0


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    with open(args.solution, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BenchError(f"solution is not valid JSON: {exc}") from None
    plans = solution_from_obj(sc, obj)
    verdict = validate_solution(sc.net, sc.agents_by_id(), plans)
    blocks = " ".join("{" + ",".join(b) + "}" for b in verdict.partition.blocks)
    print(f"valid: {'yes' if verdict.ok else 'no'}")
    print(f"blocks: {blocks}")
    for problem in verdict.problems:
        print(f"violation: {problem}")
    return 0 if verdict.ok else 1


def _cmd_serve_worker(args) -> int:
    sc = load_scenario(args.scenario)

    def ready(addr):
        print(f"listening on {addr[0]}:{addr[1]}", flush=True)

    return run_worker(sc.net, sc.agents_by_id(), parse_address(args.listen), ready=ready)


def _cmd_serve_coordinator(args) -> int:
    sc = load_scenario(args.scenario)
    for address in args.workers:
        parse_address(address)  # fail fast on malformed addresses
    started = time.monotonic()
    report = run_coordinator(
        sc.net, sc.agents_by_id(), args.algo, args.workers, heuristic=args.heuristic
    )
    elapsed = int((time.monotonic() - started) * 1000)
    verdict = validate_solution(sc.net, sc.agents_by_id(), report.plans)
    if not verdict.ok:
        raise BenchError("remote run produced a conflicted solution")
    if args.out:
        dest = os.path.join(_ensure_dir(args.out), "solution.json")
        with open(dest, "w", encoding="ascii") as fh:
            json.dump(solution_to_obj(sc, report, elapsed), fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(dest, file=sys.stderr)
    print(
        f"algorithm={report.algorithm} cost={report.cost_ms} "
        f"nodes_generated={report.nodes_generated} nodes_evaluated={report.nodes_evaluated} "
        f"remote_requests={report.remote_requests} elapsed_ms={elapsed}"
    )
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
    "serve-worker": _cmd_serve_worker,
    "serve-coordinator": _cmd_serve_coordinator,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (BenchError, DistribError, HighLevelError, PlanError, RoadNetError) as exc:
        print(f"seapath: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"seapath: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
