"""Command-line entry point: run, sweep, alloc, check, report.

Exit status is 0 on success, 1 when an input fails validation and 2 when an
isolation violation is detected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .engine import profile_mpki_raw
from .events import EventLog, LogParseError, _atomic_write
from .experiment import (PROFILE_CORES, ExperimentPlan, RunSpec, compare_report, load_config,
                         read_metrics_csv, run_experiment)
from .heuristic import compute_allocation, exhaustive_optimal, normalize_trend
from .isocheck import check
from .machine import ClusterMap, ConfigurationError, validate_cluster_map
from .netsim import verify_containment
from .secmodel import ArchMode
from .workload import load_trend, load_workload

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg})") from None


def cmd_run(args) -> int:
    if args.plan:
        plan = ExperimentPlan.load(args.plan)
        if args.out:
            plan.out = args.out
    else:
        if not args.workload:
            raise ConfigurationError("run needs --workload or --plan")
        modes = [m for chunk in args.mode for m in chunk.split(",") if m]
        policy = "oracle" if args.oracle else "heuristic"
        runs = [RunSpec(w, m, args.seed, policy, args.homing) for w in args.workload for m in modes]
        plan = ExperimentPlan(args.out or "out", runs, args.config)
    if args.config:
        plan.config = args.config
    if args.no_trace:
        plan.trace = False
    if args.no_check:
        plan.check = False
    outcomes = run_experiment(plan)
    violated = False
    for oc in outcomes:
        m = oc.metrics
        verdict = oc.report.verdict if oc.report is not None else "unchecked"
        violated |= verdict == "violated"
        print(f"{oc.workload.name:<16} {oc.spec.mode:<9} seed={oc.spec.seed} "
              f"cores={m.cores_secure}/{m.cores_insecure} completion={m.completion_time:.6f}s "
              f"purge={m.purge_time:.6f}s reconfig={m.reconfig_time:.6f}s {verdict}")
        if oc.report is not None and oc.report.violations and args.verbose:
            print(oc.report.summary())
    print(f"wrote {os.path.join(plan.out, 'metrics.csv')}")
    return EXIT_VIOLATION if violated else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    wl = load_workload(args.workload)
    app = wl.to_app()
    cores = [int(c) for c in args.cores.split(",")] if args.cores else list(PROFILE_CORES)
    out = args.out or "."
    for ps, proc in zip(wl.processes, app.processes):
        raw = profile_mpki_raw(cfg, proc, cores, args.seed)
        path = os.path.join(out, f"{wl.name}.pid{ps.pid}.csv")
        _atomic_write(path, normalize_trend(raw).to_csv())
        peak = max(v for _, v in raw)
        print(f"pid {ps.pid} ({ps.security}): peak {peak:.3f} MPKI -> {path}")
    return EXIT_OK


def cmd_alloc(args) -> int:
    cfg = load_config(args.config)
    n = args.cores or len(cfg.usable_tiles())
    ts, ti = load_trend(args.secure_trend), load_trend(args.insecure_trend)
    if args.oracle:
        cs, ci = exhaustive_optimal(ts, ti, n)
        out = {"branch": "oracle", "cores_secure": cs, "cores_insecure": ci}
    else:
        out = compute_allocation(ts, ti, n).to_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_check(args) -> int:
    if args.map:
        cfg = load_config(args.config)
        cmap = ClusterMap.from_dict(_read_json(args.map))
        problems = validate_cluster_map(cfg, cmap)
        if not problems.ok:
            for p in problems.violations:
                print("invalid:", p)
            return EXIT_INVALID
        rep = verify_containment(cmap)
        print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK if rep.ok else EXIT_VIOLATION
    if not args.log:
        raise ConfigurationError("check needs a log file or --map")
    log = EventLog.read(args.log)
    rep = check(log)
    if args.json:
        _atomic_write(args.json, rep.to_json() + "\n")
    print(rep.summary())
    return EXIT_VIOLATION if rep.violations else EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.metrics:
        with open(path) as fh:
            rows.extend(read_metrics_csv(fh.read()))
    rep = compare_report(rows)
    print(rep.to_text(), end="")
    if args.out:
        _atomic_write(args.out, rep.to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tilesec", description="Cluster-isolation simulator for a tiled multicore.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="machine config JSON (defaults to the built-in 64-core machine)")

    p = sub.add_parser("run", help="simulate workloads under one or more architecture modes")
    common(p)
    p.add_argument("--workload", action="append", help="workload JSON (repeatable)")
    p.add_argument("--plan", help="experiment plan JSON instead of --workload/--mode")
    p.add_argument("--mode", action="append", default=[],
                   help="comma-separated modes: " + ",".join(m.value for m in ArchMode))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--homing", choices=["local", "hashed"])
    p.add_argument("--oracle", action="store_true", help="use the exhaustive split instead of the heuristic")
    p.add_argument("--no-trace", action="store_true", help="skip event logs (and therefore checking)")
    p.add_argument("--no-check", action="store_true", help="do not run the isolation checker")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="profile per-process MPKI against core count")
    common(p)
    p.add_argument("--workload", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cores", help="comma-separated core counts")
    p.add_argument("--out", help="directory for the trend CSVs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("alloc", help="split cores between two clusters from trend files")
    common(p)
    p.add_argument("secure_trend")
    p.add_argument("insecure_trend")
    p.add_argument("--cores", type=int, help="cores to divide (default: all usable tiles)")
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_alloc)

    p = sub.add_parser("check", help="verify an event log, or the routing containment of a cluster map")
    common(p)
    p.add_argument("log", nargs="?")
    p.add_argument("--map", help="cluster map JSON to verify for containment instead of a log")
    p.add_argument("--json", help="write the full violation report here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("report", help="geometric-mean comparison across modes")
    p.add_argument("metrics", nargs="+", help="metrics CSV files")
    p.add_argument("--out", help="write the comparison table as CSV")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, LogParseError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
