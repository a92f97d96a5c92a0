"""``admissim`` command line: run scenarios and sweeps, write reports.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .reporting import SweepReport, average, emit_csv, emit_table
from .scenario import (SWEEP_AXES, Scenario, SweepAxis, canned_names, dumps, point_label, resolve,
                       run, sweep_axis)
from .workload import ConfigError

log = logging.getLogger("admissim")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
THREADS_ENV = "ADMISSIM_THREADS"


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = int(cap)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return max(1, min(n, n_tasks))


def select_seeds(sc: Scenario, seed: Optional[int], runs: Optional[int]) -> list[int]:
    """``--seed`` starts a consecutive block; ``--runs`` trims or extends the list."""
    if runs is not None and runs < 1:
        raise ConfigError("--runs must be >= 1")
    if seed is not None:
        return [seed + i for i in range(runs or 1)]
    seeds = list(sc.seeds)
    if runs is None:
        return seeds
    nxt = max(seeds) + 1
    while len(seeds) < runs:
        seeds.append(nxt)
        nxt += 1
    return seeds[:runs]


def run_sweep(sc: Scenario, seeds: Sequence[int]) -> SweepReport:
    """Every (point, seed) pair in parallel; results assembled in input order."""
    points = sc.points()
    tasks = [(p, s) for p in points for s in seeds]
    with ThreadPoolExecutor(max_workers=worker_count(len(tasks))) as pool:
        futures = [pool.submit(run, sc, s, p) for p, s in tasks]
        reports = [f.result() for f in futures]
    runs = [reports[i * len(seeds):(i + 1) * len(seeds)] for i in range(len(points))]
    return SweepReport(sc.name, sc.axis, points, [average(r) for r in runs], runs)


def write_outputs(sc: Scenario, sweep: SweepReport, out: Path) -> Path:
    base = out / sc.name
    for point, reps in zip(sweep.points, sweep.runs):
        d = base / point_label(sc.axis, point)
        for rep in reps:
            emit_csv(rep, d / f"run-{rep.seed}.csv")
    emit_csv(sweep.averaged, base / "summary.csv")
    text = "\n".join(emit_table(sweep, attr) for attr in ("rejection_pct", "rt_p50_ms", "rt_p90_ms"))
    (base / "summary.txt").write_text(text)
    (base / "scenario.yaml").write_text(dumps(sc))
    return base


def _parse_axis_values(axis: str, raw: str) -> SweepAxis:
    if axis == "wait_limits":
        raise ConfigError("wait_limits sweeps must be declared in the scenario file")
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {raw!r}") from None
    return sweep_axis(axis, values, "--values")


def _execute(args, sc: Scenario) -> int:
    if args.queries is not None:
        if args.queries < 1:
            raise ConfigError("--queries must be >= 1")
        sc = replace(sc, query_count=args.queries)
    seeds = select_seeds(sc, args.seed, args.runs)
    n = len(sc.points()) * len(seeds)
    log.info("%s: %d point(s) x %d seed(s), %d worker(s)", sc.name, len(sc.points()), len(seeds),
             worker_count(n))
    sweep = run_sweep(sc, seeds)
    base = write_outputs(sc, sweep, Path(args.out))
    print(emit_table(sweep))
    print(f"reports written to {base}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _execute(args, resolve(args.scenario))


def cmd_sweep(args) -> int:
    sc = resolve(args.scenario)
    if args.axis is not None:
        if args.values is None:
            raise ConfigError("--axis needs --values")
        sc = replace(sc, sweep=_parse_axis_values(args.axis, args.values))
    elif args.values is not None:
        raise ConfigError("--values needs --axis")
    if sc.sweep is None:
        raise ConfigError(f"scenario {sc.name!r} declares no sweep axis; add 'sweep' or pass --axis/--values")
    return _execute(args, sc)


def cmd_list(args) -> int:
    for name in canned_names():
        print(name)
    return EXIT_OK


def cmd_show(args) -> int:
    print(dumps(resolve(args.scenario)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="admissim", description="Admission control simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--scenario", required=True, help="scenario YAML file or shipped scenario name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="run seeds SEED, SEED+1, ... instead of the scenario's")
        p.add_argument("--runs", type=int, help="number of seeds per point")
        p.add_argument("--queries", type=int, help="override query_count (quick runs)")

    p = sub.add_parser("simulate", help="run a scenario over all its seeds (and sweep points)")
    run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a scenario across a sweep axis")
    run_flags(p)
    p.add_argument("--axis", choices=[a for a in SWEEP_AXES if a != "wait_limits"],
                   help="override the scenario's sweep axis")
    p.add_argument("--values", help="comma-separated axis values for --axis")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("list", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("show", help="print a scenario in normalized form")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_show)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"admissim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any failure during a run maps to exit 1
        log.debug("run failed", exc_info=True)
        print(f"admissim: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
