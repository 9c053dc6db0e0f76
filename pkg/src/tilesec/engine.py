"""Discrete-event execution of an interactive secure/insecure application.

Each process's phase program is cut into chunks at its interaction markers.
A chunk is simulated by issuing a small number of sampled memory accesses
through the real cache hierarchy; every sample stands for a burst of accesses
to the same line, and chunk time is extrapolated from the sampled latencies.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .events import EventKind, EventLog, SimEvent
from .heuristic import MpkiTrend, normalize_trend
from .machine import (ClusterMap, ConfigurationError, MachineConfig, Tag, single_cluster_map, split_map,
                      validate_cluster_map)
from .memsim import HomingMode, MemorySystem, PageMap
from .netsim import PacketKind, RoutePolicy, UncontainableError, choose_policy, route, verify_containment
from .secmodel import (AccessVerdict, ArchMode, ProtocolError, SecureKernelState, attest, check_access,
                       enclave_transition, reconfigure)


class AttestationError(ProtocolError):
    pass


@dataclass
class Phase:
    instructions: int
    mem_ratio: float = 0.3
    ws_pages: int = 256
    hot_fraction: float = 0.1
    reuse: float = 0.9
    line_burst: int = 8
    write_fraction: float = 0.2
    barriers: int = 0
    interactions: int = 0
    samples: int = 16

    def __post_init__(self):
        if self.instructions < 0 or self.ws_pages < 1 or self.samples < 1 or self.line_burst < 1:
            raise ConfigurationError("phase sizes must be positive")
        for name in ("mem_ratio", "hot_fraction", "reuse", "write_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"phase {name} must lie in [0, 1]")
        if self.barriers < 0 or self.interactions < 0:
            raise ConfigurationError("phase markers must be non-negative")


@dataclass
class Process:
    pid: int
    security: Tag
    phases: list
    app_id: int = 1
    thread_count: int = 64
    sync_coeff: float = 0.0
    token: Optional[str] = None
    spec_rate: float = 0.0
    fault_rate: float = 0.0
    trend: Optional[MpkiTrend] = None

    def __post_init__(self):
        self.security = Tag(self.security)
        self.phases = [p if isinstance(p, Phase) else Phase(**p) for p in self.phases]
        if self.pid <= 0:
            raise ConfigurationError("pid 0 is reserved for the secure kernel")
        if self.security == Tag.UNUSED:
            raise ConfigurationError("a process is either secure or insecure")
        if self.thread_count < 1:
            raise ConfigurationError("thread_count must be at least 1")
        if not self.phases:
            raise ConfigurationError(f"process {self.pid} has no phases")

    @property
    def footprint_pages(self) -> int:
        return max(p.ws_pages for p in self.phases)

    @property
    def markers(self) -> int:
        return sum(p.interactions for p in self.phases)


@dataclass
class InteractiveApp:
    app_id: int
    processes: list
    interaction_rate: float
    interaction_total: int
    ipc_payload_bytes: int = 64
    signature: Optional[str] = None
    name: str = "app"

    def __post_init__(self):
        if self.interaction_rate <= 0:
            raise ConfigurationError("interaction_rate must be positive")
        if not any(p.security == Tag.INSECURE for p in self.processes):
            raise ConfigurationError("an interactive app needs at least one insecure process")
        pids = [p.pid for p in self.processes]
        if len(set(pids)) != len(pids):
            raise ConfigurationError("duplicate pid")
        for p in self.processes:
            if p.app_id != self.app_id:
                raise ConfigurationError(f"process {p.pid} belongs to app {p.app_id}, not {self.app_id}")
            if p.markers != self.interaction_total:
                raise ConfigurationError(
                    f"process {p.pid} has {p.markers} interaction markers, expected {self.interaction_total}")
        if self.secure and self.interaction_total < 1:
            raise ConfigurationError("secure processes are only reachable through at least one interaction")
        if self.ipc_payload_bytes < 1:
            raise ConfigurationError("ipc payload must be positive")

    @property
    def secure(self) -> list:
        return [p for p in self.processes if p.security == Tag.SECURE]

    @property
    def insecure(self) -> list:
        return [p for p in self.processes if p.security == Tag.INSECURE]


@dataclass
class ProcessStats:
    pid: int
    security: str
    instructions: float = 0.0
    accesses: float = 0.0
    l1_misses: float = 0.0
    l2_misses: float = 0.0
    samples: int = 0

    @property
    def l1_miss_rate(self) -> float:
        return self.l1_misses / self.accesses if self.accesses else 0.0

    @property
    def l2_miss_rate(self) -> float:
        return self.l2_misses / self.l1_misses if self.l1_misses else 0.0

    @property
    def mpki(self) -> float:
        return 1000.0 * self.l2_misses / self.instructions if self.instructions else 0.0

    def merge(self, other: "ProcessStats") -> None:
        self.instructions += other.instructions
        self.accesses += other.accesses
        self.l1_misses += other.l1_misses
        self.l2_misses += other.l2_misses
        self.samples += other.samples


@dataclass
class RunMetrics:
    mode: str
    homing: str
    completion_time: float
    compute_time: float
    purge_time: float
    entry_exit_time: float
    reconfig_time: float
    interactions: int
    cores_secure: int
    cores_insecure: int
    per_process: dict = field(default_factory=dict)
    purge_events: int = 0
    flushes: int = 0
    spec_discards: int = 0
    faults: int = 0

    def side(self, tag: Tag) -> ProcessStats:
        agg = ProcessStats(0, Tag(tag).value)
        for st in self.per_process.values():
            if st.security == Tag(tag).value:
                agg.merge(st)
        return agg

    def to_row(self) -> dict:
        s = self.side(Tag.SECURE)
        i = self.side(Tag.INSECURE)
        return {
            "mode": self.mode, "homing": self.homing,
            "cores_secure": self.cores_secure, "cores_insecure": self.cores_insecure,
            "completion_time": self.completion_time, "compute_time": self.compute_time,
            "purge_time": self.purge_time, "entry_exit_time": self.entry_exit_time,
            "reconfig_time": self.reconfig_time, "interactions": self.interactions,
            "l1_miss_rate_secure": s.l1_miss_rate, "l1_miss_rate_insecure": i.l1_miss_rate,
            "l2_miss_rate_secure": s.l2_miss_rate, "l2_miss_rate_insecure": i.l2_miss_rate,
            "mpki_secure": s.mpki, "mpki_insecure": i.mpki,
        }


def default_homing(mode: ArchMode) -> HomingMode:
    return HomingMode.LOCAL if mode.guarded else HomingMode.HASHED


def iter_groups(proc: Process) -> Iterator[list]:
    """Yield the work between consecutive interaction markers as lists of (phase, instr, barriers)."""
    cur = []
    for ph in proc.phases:
        m = ph.interactions
        share = ph.instructions / (m + 1)
        bshare = ph.barriers / (m + 1)
        for i in range(m + 1):
            if share > 0:
                cur.append((ph, share, bshare))
            if i < m:
                yield cur
                cur = []
    yield cur


def thread_ranges(ph: Phase, t: int, k: int, lines_per_page: int) -> tuple:
    """Contiguous (hot, cold) line-index ranges owned by thread ``t`` of ``k``."""
    lines = ph.ws_pages * lines_per_page
    hot = max(1, int(lines * ph.hot_fraction))
    out = []
    for lo, hi in ((0, hot), (hot, lines)):
        span = hi - lo
        if span >= k:
            per = span // k
            out.append(range(lo + t * per, lo + (t + 1) * per))
        else:
            out.append(range(lo, hi))
    return tuple(out)


def line_index(rng: random.Random, ph: Phase, t: int, k: int, lines_per_page: int) -> int:
    """Draw a line of thread ``t``'s share of the working set."""
    hot, cold = thread_ranges(ph, t, k, lines_per_page)
    if rng.random() < ph.reuse or not cold:
        r = hot
    else:
        r = cold
    return r[rng.randrange(len(r))]


class _Layout:
    """Physical placement of every process's pages and of the IPC buffer."""

    def __init__(self, cfg: MachineConfig, cmap: ClusterMap, app: InteractiveApp):
        self.cfg = cfg
        pages_per_region = cfg.region_bytes // cfg.page_bytes
        self.ipc_page = cmap.ipc_buffer_region * pages_per_region
        self.base: dict[int, int] = {}
        self.cluster_pages: dict[Tag, list] = {Tag.SECURE: [], Tag.INSECURE: []}
        cursor = {}
        for tag in (Tag.SECURE, Tag.INSECURE):
            regions = sorted(cmap.regions_of(tag))
            if tag == Tag.INSECURE:
                start = self.ipc_page + 1
                limit = (cmap.ipc_buffer_region + 1) * pages_per_region
            elif regions:
                start = regions[0] * pages_per_region
                limit = start + pages_per_region
            else:
                start = limit = 0
            cursor[tag] = (start, limit)
        for p in app.processes:
            start, limit = cursor[p.security]
            if start + p.footprint_pages > limit:
                raise ConfigurationError(f"process {p.pid} does not fit in its DRAM region")
            self.base[p.pid] = start
            self.cluster_pages[p.security].extend(range(start, start + p.footprint_pages))
            cursor[p.security] = (start + p.footprint_pages, limit)

    def page_cluster(self) -> dict:
        out = {pg: tag for tag, pages in self.cluster_pages.items() for pg in pages}
        out[self.ipc_page] = Tag.INSECURE
        return out


def _home_pages(pmap: PageMap, layout: _Layout, cmap: ClusterMap, usable: list) -> None:
    for tag, pages in layout.cluster_pages.items():
        slices = cmap.tiles_of(tag) or usable
        for j, pg in enumerate(pages):
            pmap.map_page(pg, slices[j % len(slices)])
    ins = cmap.tiles_of(Tag.INSECURE)
    pmap.map_page(layout.ipc_page, ins[0] if ins else usable[0])


def make_router(cmap_ref: list, spatial: bool):
    """Router for the memory system; ``cmap_ref[0]`` is the map currently installed."""
    def router(src, dst, cluster, pkt, mc):
        if not spatial or pkt == "ipc":
            return route(src, dst, RoutePolicy.XY)
        try:
            pol = choose_policy(cmap_ref[0], src, dst, PacketKind(pkt), mc=mc)
        except UncontainableError:
            pol = RoutePolicy.XY
        return route(src, dst, pol)
    return router


def run_header(cfg: MachineConfig, cmap: ClusterMap, app: InteractiveApp, mode: ArchMode,
               homing: HomingMode, seed: int, layout: _Layout, pmap: PageMap) -> dict:
    return {
        "mode": mode.value, "spatial": not mode.temporal, "homing": homing.value, "seed": seed,
        "app_id": app.app_id, "app": app.name, "interaction_total": app.interaction_total,
        "pid_cluster": {str(p.pid): p.security.value for p in app.processes} | {"0": Tag.SECURE.value},
        "pid_app": {str(p.pid): p.app_id for p in app.processes},
        "map": cmap.to_dict(),
        "ipc_page": layout.ipc_page,
        "ipc_home": pmap.page_home[layout.ipc_page] if homing == HomingMode.LOCAL else None,
        "grid_cols": cfg.grid_cols, "grid_rows": cfg.grid_rows,
        "line_bytes": cfg.line_bytes, "page_bytes": cfg.page_bytes, "region_bytes": cfg.region_bytes,
        "mc_positions": [list(c) for c in cfg.mc_positions],
    }


class _Sim:
    def __init__(self, cfg, cmap, app, mode, seed, homing, trace, warmup):
        self.cfg = cfg
        self.app = app
        self.mode = mode
        self.seed = seed
        self.homing = homing
        self.warmup_on = warmup
        self.log = EventLog()
        # physical placement is fixed by the controller partition, whatever the mode
        part = cmap if cmap.regions_of(Tag.SECURE) else split_map(cfg, len(cfg.usable_tiles()) // 2)
        self.layout = _Layout(cfg, part, app)
        usable = cfg.usable_tiles()
        self.usable = usable
        self.pmap = PageMap(homing, cfg.line_bytes, cfg.page_bytes, slices=tuple(usable))
        _home_pages(self.pmap, self.layout, cmap, usable)
        self.mem = MemorySystem(cfg, self.pmap, self.log, trace=trace)
        self.mem.ipc_page = self.layout.ipc_page
        for p in app.processes:
            self.mem.pid_cluster[p.pid] = p.security.value
            for pg in range(self.layout.base[p.pid], self.layout.base[p.pid] + p.footprint_pages):
                self.mem.page_owner[pg] = p.pid
        self.cmap_ref = [cmap]
        self.mem.router = make_router(self.cmap_ref, not mode.temporal)
        self.kernel = SecureKernelState(current_map=cmap)
        self.log.header = run_header(cfg, cmap, app, mode, homing, seed, self.layout, self.pmap)
        self.rngs = {p.pid: random.Random(f"{seed}/{p.pid}") for p in app.processes}
        self.cursor = {p.pid: 0 for p in app.processes}
        self.stats = {p.pid: ProcessStats(p.pid, p.security.value) for p in app.processes}
        self.next_aid = 0
        self.spec_discards = 0
        self.faults = 0
        self.flushes = 0
        self.foreign_page = {}
        for tag, other in ((Tag.SECURE, Tag.INSECURE), (Tag.INSECURE, Tag.SECURE)):
            pages = self.layout.cluster_pages[other]
            self.foreign_page[tag] = pages[0] if pages else None

    # placement -------------------------------------------------------------
    def tiles_for(self, proc: Process) -> list:
        if self.mode.temporal:
            tiles = self.usable
        else:
            tiles = self.cmap_ref[0].tiles_of(proc.security)
        return tiles[:min(proc.thread_count, len(tiles))]

    def _line_index(self, rng: random.Random, ph: Phase, t: int, k: int) -> int:
        return line_index(rng, ph, t, k, self.cfg.page_bytes // self.cfg.line_bytes)

    def _probe(self, proc: Process, rng: random.Random, core: int) -> None:
        spec = rng.random() < proc.spec_rate
        fault = rng.random() < proc.fault_rate
        if not (spec or fault):
            return
        page = self.foreign_page[proc.security]
        if page is None:
            return
        paddr = page * self.cfg.page_bytes
        aid = self.next_aid
        self.next_aid += 1
        verdict = check_access(self.mode, self.cmap_ref[0], proc.security, paddr, spec, self.cfg,
                               self.layout.ipc_page)
        if verdict == AccessVerdict.DISCARD:
            self.spec_discards += 1
            self.mem.emit(EventKind.SPEC_DISCARD, proc.pid, tile=core, page=page, access_id=aid)
        elif verdict == AccessVerdict.FAULT:
            self.faults += 1
            self.mem.emit(EventKind.FAULT, proc.pid, tile=core, page=page, access_id=aid)
        else:
            self.mem.access(core, paddr, False, spec, pid=proc.pid, access_id=aid)

    def _part(self, proc: Process, ph: Phase, instr: float, barriers: float, tiles: list) -> float:
        """Simulate one slice of a phase; returns its cycles on the critical path."""
        cfg = self.cfg
        mem = self.mem
        rng = self.rngs[proc.pid]
        k = len(tiles)
        base = self.layout.base[proc.pid] * cfg.page_bytes
        lb = cfg.line_bytes
        lat_sum = l1m = l2m = 0
        cur = self.cursor[proc.pid]
        probing = proc.spec_rate > 0 or proc.fault_rate > 0
        for _ in range(ph.samples):
            t = cur % k
            cur += 1
            core = tiles[t]
            if probing:
                self._probe(proc, rng, core)
            idx = self._line_index(rng, ph, t, k)
            write = rng.random() < ph.write_fraction
            aid = self.next_aid
            self.next_aid += 1
            res = mem.access(core, base + idx * lb, write, pid=proc.pid, value=aid, access_id=aid)
            lat_sum += res.latency
            if not res.l1_hit:
                l1m += 1
                if res.level == "Dram":
                    l2m += 1
        self.cursor[proc.pid] = cur
        S = ph.samples
        B = ph.line_burst
        avg_lat = (lat_sum / S + (B - 1) * cfg.lat_l1_hit) / B
        accesses = instr * ph.mem_ratio
        st = self.stats[proc.pid]
        st.instructions += instr
        st.accesses += accesses
        st.l1_misses += accesses * l1m / (S * B)
        st.l2_misses += accesses * l2m / (S * B)
        st.samples += S
        return (instr / k) * (cfg.base_cpi + ph.mem_ratio * avg_lat) + barriers * proc.sync_coeff * k

    def chunk(self, proc: Process, group: list) -> float:
        """Seconds taken by one chunk of ``proc`` on its current cores."""
        tiles = self.tiles_for(proc)
        cycles = 0.0
        for ph, instr, barriers in group:
            cycles += self._part(proc, ph, instr, barriers, tiles)
        return self.cfg.cycles_to_s(cycles)

    def ipc(self, producer: Process, consumer: Optional[Process], kind: EventKind) -> float:
        """Move the payload through the IPC buffer; returns seconds spent."""
        if self.pmap.mode == HomingMode.LOCAL and \
                self.cmap_ref[0].tile_cluster[self.pmap.page_home[self.layout.ipc_page]] != Tag.INSECURE:
            raise ConfigurationError("IPC buffer must be homed in insecure resources")
        cfg = self.cfg
        lines = math.ceil(self.app.ipc_payload_bytes / cfg.line_bytes)
        base = self.layout.ipc_page * cfg.page_bytes
        cycles = 0
        if kind == EventKind.IPC_SEND:
            core = self.tiles_for(producer)[0]
            self.mem.emit(EventKind.IPC_SEND, producer.pid, tile=core, page=self.layout.ipc_page)
            for i in range(lines):
                aid = self.next_aid
                self.next_aid += 1
                cycles += self.mem.access(core, base + (i % (cfg.page_bytes // cfg.line_bytes)) * cfg.line_bytes,
                                          True, pid=producer.pid, value=aid, access_id=aid).latency
        else:
            reader = consumer or producer
            core = self.tiles_for(reader)[0]
            self.mem.emit(EventKind.IPC_RECV, reader.pid, tile=core, page=self.layout.ipc_page)
            for i in range(lines):
                aid = self.next_aid
                self.next_aid += 1
                cycles += self.mem.access(core, base + (i % (cfg.page_bytes // cfg.line_bytes)) * cfg.line_bytes,
                                          False, pid=reader.pid, access_id=aid).latency
        return cfg.cycles_to_s(cycles)

    def warmup(self) -> None:
        """Touch every process's working set; untimed and untraced."""
        if not self.warmup_on:
            return
        mem = self.mem
        trace = mem.trace
        mem.trace = False
        lpp = self.cfg.page_bytes // self.cfg.line_bytes
        order = self.app.secure + self.app.insecure
        for proc in order:
            tiles = self.tiles_for(proc)
            k = len(tiles)
            ph = max(proc.phases, key=lambda p: p.instructions)
            base = self.layout.base[proc.pid] * self.cfg.page_bytes
            for t in range(k):
                hot, cold = thread_ranges(ph, t, k, lpp)
                for idx in list(cold) + list(hot):
                    mem.access(tiles[t], base + idx * self.cfg.line_bytes, pid=proc.pid)
        mem.trace = trace


def run(cfg: MachineConfig, cmap: ClusterMap, app: InteractiveApp, mode: ArchMode, seed: int,
        target_map: Optional[ClusterMap] = None, homing: Optional[HomingMode] = None,
        trace: bool = True, warmup: bool = True, signature: Optional[str] = None):
    """Simulate ``app`` to completion; returns (RunMetrics, EventLog).

    For the spatial mode ``cmap`` is the initial cluster map and ``target_map``
    the map installed by the single reconfiguration (defaults to ``cmap``).
    Temporal modes use ``cmap`` as the static L2/DRAM partition.
    """
    mode = ArchMode(mode)
    homing = HomingMode(homing) if homing is not None else default_homing(mode)
    rep = validate_cluster_map(cfg, cmap)
    if not rep.ok:
        raise ConfigurationError("; ".join(rep.violations))
    if not mode.temporal:
        if not verify_containment(cmap).ok:
            raise UncontainableError("uncontainable cluster shape")
        if app.secure and not cmap.tiles_of(Tag.SECURE):
            raise ConfigurationError("secure processes need a secure cluster")
    sim = _Sim(cfg, cmap, app, mode, seed, homing, trace, warmup)
    sig = signature if signature is not None else app.signature
    for p in app.processes:
        if not attest(sim.kernel, p, sig):
            raise AttestationError(f"process {p.pid} failed attestation and may not run on secure tiles")
    sim.warmup()
    if mode.temporal:
        metrics = _run_temporal(sim)
    else:
        metrics = _run_spatial(sim, target_map)
    return metrics, sim.log


def _finish(sim: _Sim, compute: float, purge_events: int, transitions: int, reconfigs: int) -> RunMetrics:
    cfg = sim.cfg
    purge = purge_events * cfg.purge_event_s
    ee = transitions * cfg.entry_exit_s
    rc = reconfigs * cfg.reconfig_s
    cmap = sim.cmap_ref[0]
    if sim.mode.temporal:
        cs, ci = len(sim.usable), len(sim.usable)
    else:
        cs, ci = len(cmap.tiles_of(Tag.SECURE)), len(cmap.tiles_of(Tag.INSECURE))
    return RunMetrics(sim.mode.value, sim.homing.value, compute + purge + ee + rc, compute, purge, ee, rc,
                      sim.app.interaction_total, cs, ci, sim.stats, purge_events, sim.flushes,
                      sim.spec_discards, sim.faults)


def _run_temporal(sim: _Sim) -> RunMetrics:
    app = sim.app
    mode = sim.mode
    cfg = sim.cfg
    ins_groups = {p.pid: iter_groups(p) for p in app.insecure}
    sec_groups = {p.pid: iter_groups(p) for p in app.secure}
    producer = app.insecure[0]
    consumer = app.secure[0] if app.secure else None
    clock = 0.0
    compute = 0.0
    purge_events = transitions = 0
    enclave = mode in (ArchMode.SGX_LIKE, ArchMode.MI6) and consumer is not None

    def advance(dt: float, is_compute: bool = True):
        nonlocal clock, compute
        clock += dt
        sim.mem.now = clock * 1e9
        if is_compute:
            compute += dt

    def run_side(procs, groups, merge_first=False):
        for p in procs:
            g = next(groups[p.pid])
            if merge_first:
                g = g + next(groups[p.pid])
            advance(sim.chunk(p, g))

    sim.mem.now = 0.0
    run_side(app.insecure, ins_groups)
    for j in range(1, app.interaction_total + 1):
        advance(sim.ipc(producer, consumer, EventKind.IPC_SEND))
        if enclave:
            res = enclave_transition(mode, "enter", sim.mem, sim.usable, consumer.pid)
            transitions += 1
            purge_events += res.purges
            sim.flushes += res.purges
            advance(res.entry_exit_cost + res.purge_cost, False)
        advance(sim.ipc(producer, consumer, EventKind.IPC_RECV))
        run_side(app.secure, sec_groups, merge_first=(j == 1))
        if enclave:
            res = enclave_transition(mode, "exit", sim.mem, sim.usable, consumer.pid,
                                     charge_purge=cfg.purge_pairing == "per-transition")
            transitions += 1
            sim.flushes += res.purges
            if res.purge_cost:
                purge_events += res.purges
            advance(res.entry_exit_cost + res.purge_cost, False)
        run_side(app.insecure, ins_groups)
    return _finish(sim, compute, purge_events, transitions, 0)


def _run_spatial(sim: _Sim, target_map: Optional[ClusterMap]) -> RunMetrics:
    app = sim.app
    cfg = sim.cfg
    old = sim.cmap_ref[0]
    if target_map is None:
        target_map = old
    if not app.secure and target_map.tiles_of(Tag.SECURE):
        target_map = single_cluster_map(cfg)
    if app.secure and not target_map.tiles_of(Tag.SECURE):
        raise ConfigurationError("secure processes need a secure cluster")
    sim.mem.now = 0.0
    reconfigure(sim.kernel, sim.mem, old, target_map, app.app_id, sim.layout.page_cluster())
    sim.cmap_ref[0] = target_map
    t0 = cfg.reconfig_s
    T = app.interaction_total
    producer = app.insecure[0]
    consumer = app.secure[0] if app.secure else None
    ins_groups = {p.pid: iter_groups(p) for p in app.insecure}
    sec_groups = {p.pid: iter_groups(p) for p in app.secure}
    heap: list = []
    seq = [0]
    sent: dict[int, float] = {}
    state = {"sec_free": t0, "sec_next": 1, "sec_busy": False, "ins_end": t0, "sec_end": t0}

    def push(t, fn, j):
        heapq.heappush(heap, (t, seq[0], fn, j))
        seq[0] += 1

    def ins_chunk(t, j):
        d = 0.0
        for p in app.insecure:
            d += sim.chunk(p, next(ins_groups[p.pid]))
        if j < T:
            push(t + d, send, j + 1)
        else:
            state["ins_end"] = t + d

    def send(t, j):
        d = sim.ipc(producer, consumer, EventKind.IPC_SEND)
        sent[j] = t + d
        push(t + d, ins_chunk, j)
        if not state["sec_busy"] and state["sec_next"] == j:
            state["sec_busy"] = True
            push(max(t + d, state["sec_free"]), sec_chunk, j)

    def sec_chunk(t, j):
        d = sim.ipc(producer, consumer, EventKind.IPC_RECV)
        for p in app.secure:
            g = next(sec_groups[p.pid])
            if j == 1:
                g = g + next(sec_groups[p.pid])
            d += sim.chunk(p, g)
        state["sec_free"] = t + d
        state["sec_end"] = t + d
        state["sec_next"] = j + 1
        if j + 1 in sent:
            push(max(t + d, sent[j + 1]), sec_chunk, j + 1)
        else:
            state["sec_busy"] = False

    push(t0, ins_chunk, 0)
    while heap:
        t, _, fn, j = heapq.heappop(heap)
        sim.mem.now = t * 1e9
        fn(t, j)
    end = max(state["ins_end"], state["sec_end"])
    return _finish(sim, end - t0, 0, 0, 1)


def ipc_interact(cfg: MachineConfig, cmap: ClusterMap, app: InteractiveApp, direction: str,
                 mode: ArchMode = ArchMode.IRONHIDE, seed: int = 0) -> list:
    """One interaction in isolation; returns the events it produced."""
    if direction not in ("to-secure", "to-insecure"):
        raise ValueError("direction must be to-secure or to-insecure")
    mode = ArchMode(mode)
    sim = _Sim(cfg, cmap, app, mode, seed, default_homing(mode), True, False)
    ins = app.insecure[0]
    sec = app.secure[0] if app.secure else None
    producer, consumer = (ins, sec) if direction == "to-secure" or sec is None else (sec, ins)
    enclave = mode in (ArchMode.SGX_LIKE, ArchMode.MI6) and sec is not None
    if direction == "to-secure":
        sim.ipc(producer, None, EventKind.IPC_SEND)
        if enclave:
            enclave_transition(mode, "enter", sim.mem, sim.usable, sec.pid)
        sim.ipc(producer, consumer, EventKind.IPC_RECV)
    else:
        if enclave:
            enclave_transition(mode, "exit", sim.mem, sim.usable, sec.pid)
        sim.ipc(producer, None, EventKind.IPC_SEND)
        sim.ipc(producer, consumer, EventKind.IPC_RECV)
    return list(sim.log.events)


def profile_mpki_raw(cfg: MachineConfig, proc: Process, core_counts: list, seed: int = 0,
                     samples: int = 2000) -> list[tuple[int, float]]:
    """Standalone runs at each core count; returns (cores, raw L2 MPKI) pairs."""
    if not core_counts or any(b <= a for a, b in zip(core_counts, core_counts[1:])) or core_counts[0] < 1:
        raise ConfigurationError("core counts must be strictly increasing and positive")
    usable = cfg.usable_tiles()
    if core_counts[-1] > len(usable):
        raise ConfigurationError("more cores than the machine provides")
    out = []
    for k in core_counts:
        tiles = usable[:k]
        pmap = PageMap(HomingMode.LOCAL, cfg.line_bytes, cfg.page_bytes, slices=tuple(tiles))
        mem = MemorySystem(cfg, pmap, None, trace=False)
        for j in range(proc.footprint_pages):
            pmap.map_page(j, tiles[j % k])
        lpp = cfg.page_bytes // cfg.line_bytes
        ph0 = max(proc.phases, key=lambda p: p.instructions)
        threads = min(proc.thread_count, k)
        for t in range(threads):
            hot, cold = thread_ranges(ph0, t, threads, lpp)
            for idx in list(cold) + list(hot):
                mem.access(tiles[t], idx * cfg.line_bytes, pid=proc.pid)
        rng = random.Random(f"profile/{seed}/{proc.pid}/{k}")
        total_instr = sum(p.instructions for p in proc.phases) or 1
        instr = misses = 0.0
        cur = 0
        for ph in proc.phases:
            n = max(1, round(samples * ph.instructions / total_instr))
            l2m = 0
            for _ in range(n):
                t = cur % threads
                cur += 1
                idx = line_index(rng, ph, t, threads, lpp)
                write = rng.random() < ph.write_fraction
                res = mem.access(tiles[t], idx * cfg.line_bytes, write, pid=proc.pid, value=cur)
                if res.level == "Dram":
                    l2m += 1
            w = ph.instructions or 1
            instr += w
            misses += w * ph.mem_ratio * l2m / (n * ph.line_burst)
        out.append((k, 1000.0 * misses / instr))
    return out


def profile_mpki(cfg: MachineConfig, proc: Process, core_counts: list, seed: int = 0,
                 samples: int = 2000) -> MpkiTrend:
    return normalize_trend(profile_mpki_raw(cfg, proc, core_counts, seed, samples))


def traffic_sweep(cfg: MachineConfig, cmap: ClusterMap) -> EventLog:
    """Send one coherence packet between every ordered intra-cluster tile pair and one
    memory packet from every tile to each controller of its cluster."""
    rep = validate_cluster_map(cfg, cmap)
    if not rep.ok:
        raise ConfigurationError("; ".join(rep.violations))
    log = EventLog(header={"mode": ArchMode.IRONHIDE.value, "spatial": True, "app_id": 0,
                           "pid_cluster": {"0": "secure", "1": "secure", "2": "insecure"},
                           "map": cmap.to_dict(), "ipc_page": None, "ipc_home": None,
                           "grid_cols": cfg.grid_cols, "grid_rows": cfg.grid_rows,
                           "line_bytes": cfg.line_bytes, "page_bytes": cfg.page_bytes,
                           "region_bytes": cfg.region_bytes,
                           "mc_positions": [list(c) for c in cfg.mc_positions]})
    for pid, tag in ((1, Tag.SECURE), (2, Tag.INSECURE)):
        tiles = cmap.tiles_of(tag)
        coords = [cmap.coord(t) for t in tiles]
        for s in coords:
            for d in coords:
                if s == d:
                    continue
                pol = choose_policy(cmap, s, d, PacketKind.COHERENCE)
                log.append(SimEvent(0.0, EventKind.PACKET_HOP, pid, tag.value, pkt="coherence",
                                    path=[list(c) for c in route(s, d, pol)]))
            for m in cmap.mcs_of(tag):
                pol = choose_policy(cmap, s, cmap.mc_positions[m], PacketKind.MEMORY, mc=m)
                log.append(SimEvent(0.0, EventKind.PACKET_HOP, pid, tag.value, pkt="memory", mc=m,
                                    path=[list(c) for c in route(s, cmap.mc_positions[m], pol)]))
    return log
