"""Experiment plans, the metrics CSV, and cross-mode comparison reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .engine import InteractiveApp, RunMetrics, profile_mpki_raw, run
from .events import EventLog, _atomic_write
from .heuristic import (combine_raw, compute_allocation, exhaustive_optimal,
                        normalize_trend)
from .isocheck import ViolationReport, check
from .machine import (ConfigurationError, MachineConfig, Tag, default_config, single_cluster_map,
                      split_map)
from .memsim import HomingMode
from .secmodel import ArchMode
from .workload import WorkloadSpec, load_workload

CSV_COLUMNS = (
    "workload", "template", "mode", "seed", "homing", "cores_secure", "cores_insecure",
    "completion_time", "compute_time", "purge_time", "entry_exit_time", "reconfig_time",
    "interactions", "l1_miss_rate_secure", "l1_miss_rate_insecure",
    "l2_miss_rate_secure", "l2_miss_rate_insecure", "mpki_secure", "mpki_insecure", "verdict",
)

PROFILE_CORES = (4, 8, 16, 24, 32, 40, 48, 56, 64)


def load_config(path: Optional[str]) -> MachineConfig:
    if path is None:
        return default_config()
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg})") from None
    return MachineConfig.from_dict(d)


@dataclass
class RunSpec:
    workload: str
    mode: str
    seed: int
    policy: str = "heuristic"
    homing: Optional[str] = None

    def __post_init__(self):
        ArchMode(self.mode)
        if self.policy not in ("heuristic", "oracle"):
            raise ConfigurationError(f"unknown cluster policy {self.policy!r}")
        if self.homing is not None:
            HomingMode(self.homing)
        if not isinstance(self.seed, int):
            raise ConfigurationError("every run needs an explicit integer seed")


@dataclass
class ExperimentPlan:
    out: str
    runs: list
    config: Optional[str] = None
    check: bool = True
    trace: bool = True

    def __post_init__(self):
        self.runs = [r if isinstance(r, RunSpec) else RunSpec(**r) for r in self.runs]

    @classmethod
    def load(cls, path: str) -> "ExperimentPlan":
        with open(path) as fh:
            d = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))
        plan = cls(**d)
        if plan.config and not os.path.isabs(plan.config):
            plan.config = os.path.join(base, plan.config)
        for r in plan.runs:
            if not os.path.isabs(r.workload):
                r.workload = os.path.join(base, r.workload)
        return plan


def cluster_trends(cfg: MachineConfig, app: InteractiveApp, seed: int,
                   cores=PROFILE_CORES) -> dict:
    """One trend per cluster; several processes of a cluster have their raw trends summed."""
    out = {}
    for tag, procs in ((Tag.SECURE, app.secure), (Tag.INSECURE, app.insecure)):
        if not procs:
            continue
        if all(p.trend is not None for p in procs):
            if len(procs) == 1:
                out[tag] = procs[0].trend
            else:
                out[tag] = normalize_trend(combine_raw([p.trend.samples for p in procs]))
            continue
        raws = [profile_mpki_raw(cfg, p, list(cores), seed) for p in procs]
        out[tag] = normalize_trend(combine_raw(raws))
    return out


def plan_allocation(cfg: MachineConfig, app: InteractiveApp, seed: int, oracle: bool = False):
    """(target map, decision dict) for the spatial mode."""
    n = len(cfg.usable_tiles())
    if not app.secure:
        return None, {"branch": "single-cluster", "cores_secure": 0, "cores_insecure": n}
    trends = cluster_trends(cfg, app, seed)
    ts, ti = trends[Tag.SECURE], trends[Tag.INSECURE]
    if oracle:
        cs, ci = exhaustive_optimal(ts, ti, n)
        decision = {"branch": "oracle", "cores_secure": cs, "cores_insecure": ci}
    else:
        d = compute_allocation(ts, ti, n)
        decision = d.to_dict()
        cs = d.cores_secure
    return split_map(cfg, cs), decision


@dataclass
class RunOutcome:
    spec: RunSpec
    workload: WorkloadSpec
    metrics: RunMetrics
    log: EventLog
    report: Optional[ViolationReport]
    decision: Optional[dict] = None

    def row(self) -> dict:
        m = self.metrics.to_row()
        row = {"workload": self.workload.name, "template": self.workload.template, "mode": self.spec.mode,
               "seed": self.spec.seed, **m,
               "verdict": self.report.verdict if self.report is not None else "unchecked"}
        return {k: row[k] for k in CSV_COLUMNS}


def run_one(cfg: MachineConfig, wl: WorkloadSpec, spec: RunSpec, do_check: bool = True,
            trace: bool = True) -> RunOutcome:
    app = wl.to_app()
    mode = ArchMode(spec.mode)
    homing = HomingMode(spec.homing) if spec.homing else None
    decision = None
    target = None
    if mode == ArchMode.INSECURE_BASE:
        cmap = single_cluster_map(cfg)
    else:
        cmap = split_map(cfg, len(cfg.usable_tiles()) // 2)
        if mode == ArchMode.IRONHIDE:
            target, decision = plan_allocation(cfg, app, spec.seed, spec.policy == "oracle")
    metrics, log = run(cfg, cmap, app, mode, spec.seed, target_map=target, homing=homing, trace=trace)
    report = check(log) if do_check and trace else None
    return RunOutcome(spec, wl, metrics, log, report, decision)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ConfigurationError("metrics CSV does not match the expected column set")
    out = []
    for r in reader:
        d = dict(r)
        for k in CSV_COLUMNS:
            if k in ("workload", "template", "mode", "homing", "verdict"):
                continue
            d[k] = int(d[k]) if k in ("seed", "cores_secure", "cores_insecure", "interactions") else float(d[k])
        out.append(d)
    return out


def run_experiment(plan: ExperimentPlan) -> list[RunOutcome]:
    """Validate everything up front, then execute each run and write its artifacts."""
    cfg = load_config(plan.config)
    workloads = {}
    for r in plan.runs:
        if r.workload not in workloads:
            if not os.path.exists(r.workload):
                raise ConfigurationError(f"workload file not found: {r.workload}")
            workloads[r.workload] = load_workload(r.workload)
    outcomes = []
    os.makedirs(plan.out, exist_ok=True)
    for r in plan.runs:
        wl = workloads[r.workload]
        oc = run_one(cfg, wl, r, plan.check, plan.trace)
        outcomes.append(oc)
        stem = f"{wl.name}-{r.mode}-{r.seed}" + (f"-{r.homing}" if r.homing else "")
        if plan.trace:
            oc.log.write(os.path.join(plan.out, "logs", stem + ".ndjson"))
        if oc.report is not None:
            _atomic_write(os.path.join(plan.out, "reports", stem + ".json"), oc.report.to_json() + "\n")
        if oc.decision is not None:
            _atomic_write(os.path.join(plan.out, "decisions", stem + ".json"),
                          json.dumps(oc.decision, indent=2, sort_keys=True) + "\n")
    _atomic_write(os.path.join(plan.out, "metrics.csv"), rows_to_csv([o.row() for o in outcomes]))
    return outcomes


def geomean(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("geometric mean of nothing")
    if any(v < 0 for v in values):
        raise ValueError("geometric mean needs non-negative values")
    if any(v == 0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def _ratio(a: float, b: float) -> Optional[float]:
    if b == 0:
        return None if a == 0 else math.inf
    return a / b


@dataclass
class ComparisonReport:
    modes: list
    rows: list = field(default_factory=list)
    purge_ratio_mi6_ironhide: Optional[float] = None

    def to_csv(self) -> str:
        cols = ("mode", "workloads", "geomean_completion", "geomean_purge_component",
                "completion_vs_insecure", "purge_component_vs_ironhide")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r[c]) if r[c] is not None else "" for c in cols])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'mode':<10} {'n':>3} {'gm completion (s)':>18} {'gm purge+reconfig (s)':>22} "
                 f"{'vs insecure':>12}"]
        for r in self.rows:
            vs = f"{r['completion_vs_insecure']:.3f}" if r["completion_vs_insecure"] is not None else "-"
            lines.append(f"{r['mode']:<10} {r['workloads']:>3} {r['geomean_completion']:>18.6f} "
                         f"{r['geomean_purge_component']:>22.6f} {vs:>12}")
        if self.purge_ratio_mi6_ironhide is not None:
            lines.append(f"purge component ratio mi6/ironhide: {self.purge_ratio_mi6_ironhide:.1f}x")
        return "\n".join(lines) + "\n"


def compare_report(rows: list) -> ComparisonReport:
    """Geometric means per mode over a common set of workloads."""
    if not rows:
        raise ConfigurationError("no rows to compare")
    by_mode: dict = {}
    for r in rows:
        by_mode.setdefault(r["mode"], {})[r["workload"]] = r
    sets = {m: set(v) for m, v in by_mode.items()}
    ref_mode = sorted(sets)[0]
    diffs = []
    for m, s in sorted(sets.items()):
        if s != sets[ref_mode]:
            diffs.append(f"{m}: missing {sorted(sets[ref_mode] - s)}, extra {sorted(s - sets[ref_mode])}")
    if diffs:
        raise ConfigurationError("workload sets differ across modes; " + "; ".join(diffs))
    order = [m.value for m in ArchMode if m.value in by_mode]
    gm_purge = {}
    out_rows = []
    ins = by_mode.get(ArchMode.INSECURE_BASE.value)
    for m in order:
        wl = by_mode[m]
        comp = geomean(r["completion_time"] for r in wl.values())
        purge = geomean(r["purge_time"] + r["reconfig_time"] for r in wl.values())
        gm_purge[m] = purge
        vs_ins = None
        if ins is not None:
            vs_ins = geomean(wl[w]["completion_time"] / ins[w]["completion_time"] for w in sorted(wl))
        out_rows.append({"mode": m, "workloads": len(wl), "geomean_completion": comp,
                         "geomean_purge_component": purge, "completion_vs_insecure": vs_ins,
                         "purge_component_vs_ironhide": None})
    ratio = None
    if ArchMode.IRONHIDE.value in gm_purge:
        ih = gm_purge[ArchMode.IRONHIDE.value]
        for r in out_rows:
            r["purge_component_vs_ironhide"] = _ratio(gm_purge[r["mode"]], ih)
        if ArchMode.MI6.value in gm_purge:
            ratio = _ratio(gm_purge[ArchMode.MI6.value], ih)
    return ComparisonReport(order, out_rows, ratio)
