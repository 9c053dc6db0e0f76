"""Workload specification files and synthetic workload templates."""

from __future__ import annotations

import json
import os
import random
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

from .engine import InteractiveApp, Phase, Process
from .events import _atomic_write
from .heuristic import MpkiTrend
from .machine import ConfigurationError, MachineConfig, Tag, default_config

TEMPLATES = {
    # events per second
    "user-interactive": 400.0,
    "os-interactive": 220_000.0,
}
DEFAULT_TOTALS = {"user-interactive": 13_300, "os-interactive": 100_000}

_PHASE_FIELDS = {f for f in Phase.__dataclass_fields__}


@dataclass
class ProcessSpec:
    pid: int
    security: str
    phases: list
    threads: int = 64
    sync_coeff: float = 0.0
    token: Optional[str] = None
    spec_rate: float = 0.0
    fault_rate: float = 0.0
    trend_file: Optional[str] = None

    def __post_init__(self):
        self.security = Tag(self.security).value
        self.phases = [dict(p) for p in self.phases]
        for p in self.phases:
            extra = set(p) - _PHASE_FIELDS
            if extra:
                raise ConfigurationError(f"unknown phase fields: {sorted(extra)}")


@dataclass
class WorkloadSpec:
    name: str
    interaction_rate: float
    interaction_total: int
    processes: list
    template: str = "custom"
    app_id: int = 1
    seed: int = 0
    signature: Optional[str] = None
    ipc_payload_bytes: int = 64
    base_dir: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.processes = [p if isinstance(p, ProcessSpec) else ProcessSpec(**p) for p in self.processes]
        if self.interaction_rate <= 0:
            raise ConfigurationError("interaction_rate must be positive")
        if self.interaction_total < 0:
            raise ConfigurationError("interaction_total must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[str] = None) -> "WorkloadSpec":
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown workload fields: {sorted(extra)}")
        try:
            return cls(**d, base_dir=base_dir)
        except TypeError as exc:
            raise ConfigurationError(f"malformed workload: {exc}") from None

    def to_app(self) -> InteractiveApp:
        procs = []
        for ps in self.processes:
            trend = None
            if ps.trend_file:
                trend = load_trend(self.resolve(ps.trend_file))
            procs.append(Process(ps.pid, Tag(ps.security), [Phase(**p) for p in ps.phases], self.app_id,
                                 ps.threads, ps.sync_coeff, ps.token, ps.spec_rate, ps.fault_rate, trend))
        return InteractiveApp(self.app_id, procs, self.interaction_rate, self.interaction_total,
                              self.ipc_payload_bytes, self.signature, self.name)

    def resolve(self, path: str) -> str:
        if os.path.isabs(path) or self.base_dir is None:
            return path
        return os.path.join(self.base_dir, path)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_trend(path: str) -> MpkiTrend:
    with open(path) as fh:
        return MpkiTrend.from_csv(fh.read())


def load_workload(path: str) -> WorkloadSpec:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc.msg})") from None
    spec = WorkloadSpec.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
    spec.to_app()
    return spec


def save_workload(spec: WorkloadSpec, path: str) -> None:
    _atomic_write(path, spec.dumps())


def _instructions_per_interaction(rate: float, cfg: MachineConfig, cpi_guess: float = 2.0) -> float:
    """Work that keeps the whole machine busy for one interaction period."""
    return cfg.clock_ghz * 1e9 / rate * len(cfg.usable_tiles()) / cpi_guess


def generate_workload(template: str, name: Optional[str] = None, seed: int = 0,
                      interaction_total: Optional[int] = None, interaction_rate: Optional[float] = None,
                      cfg: Optional[MachineConfig] = None, secure_share: float = 0.5,
                      secure_ws_pages: Optional[int] = None, insecure_ws_pages: Optional[int] = None,
                      secure_threads: int = 64, insecure_threads: int = 64,
                      sync_fraction: Optional[float] = None, barriers_per_interaction: int = 4,
                      mem_ratio: float = 0.3, hot_fraction: float = 0.1, reuse: float = 0.9,
                      samples: Optional[int] = None, spec_rate: float = 0.01,
                      fault_rate: float = 0.002) -> WorkloadSpec:
    """A two-process interactive application shaped after one of the templates.

    Working sets are drawn so they exceed a handful of L2 slices but fit in the
    whole machine, which gives each process a three-region MPKI trend. Barrier
    cost grows with core count and is scaled to the interaction period.
    """
    if template not in TEMPLATES:
        raise ConfigurationError(f"unknown template {template!r}; choose from {sorted(TEMPLATES)}")
    if not 0.0 < secure_share < 1.0:
        raise ConfigurationError("secure_share must lie strictly between 0 and 1")
    cfg = cfg or default_config()
    rng = random.Random(f"{template}/{seed}")
    rate = interaction_rate if interaction_rate is not None else TEMPLATES[template]
    total = interaction_total if interaction_total is not None else DEFAULT_TOTALS[template]
    if total < 1:
        raise ConfigurationError("an interactive workload needs at least one interaction")
    slice_pages = cfg.l2_slice_bytes // cfg.page_bytes
    ws_s = secure_ws_pages or rng.randint(12, 40) * slice_pages
    ws_i = insecure_ws_pages or rng.randint(12, 40) * slice_pages
    if sync_fraction is None:
        sync_fraction = rng.uniform(0.1, 0.4)
    if samples is None:
        samples = 16 if template == "user-interactive" else 2
    per = _instructions_per_interaction(rate, cfg)
    token = f"sig-{name or template}-{seed}"

    n = len(cfg.usable_tiles())
    period_cycles = cfg.clock_ghz * 1e9 / rate

    def proc(pid, security, share, ws, threads, probes):
        instr = int(per * share * (total + 1))
        # barriers cost ``sync_fraction`` of a chunk when the process spans the whole machine
        sync_coeff = sync_fraction * period_cycles * share / (max(barriers_per_interaction, 1) * n)
        phase = dict(instructions=instr, mem_ratio=mem_ratio, ws_pages=ws, hot_fraction=hot_fraction,
                     reuse=reuse, barriers=barriers_per_interaction * (total + 1), interactions=total,
                     samples=samples)
        return ProcessSpec(pid, security, [phase], threads, sync_coeff,
                           token if security == "secure" else None,
                           spec_rate if probes else 0.0, fault_rate if probes else 0.0)

    procs = [proc(1, "insecure", 1.0 - secure_share, ws_i, insecure_threads, True),
             proc(2, "secure", secure_share, ws_s, secure_threads, False)]
    return WorkloadSpec(name or f"{template}-{seed}", rate, total, procs, template, 1, seed, token)


def corpus_dir() -> str:
    return str(resources.files("tilesec") / "data" / "workloads")


def corpus_paths() -> list[str]:
    d = corpus_dir()
    return sorted(os.path.join(d, f) for f in os.listdir(d) if f.endswith(".json"))


def load_corpus() -> list[WorkloadSpec]:
    return [load_workload(p) for p in corpus_paths()]
