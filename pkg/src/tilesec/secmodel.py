"""Security protocols of the four architecture modes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .events import EventKind
from .machine import ClusterMap, ConfigurationError, MachineConfig, Tag, validate_cluster_map
from .memsim import HomingMode, MemorySystem
from .netsim import verify_containment


class ArchMode(str, enum.Enum):
    INSECURE_BASE = "insecure"
    SGX_LIKE = "sgx"
    MI6 = "mi6"
    IRONHIDE = "ironhide"

    @property
    def temporal(self) -> bool:
        """Core-level resources are time-shared between secure and insecure processes."""
        return self != ArchMode.IRONHIDE

    @property
    def guarded(self) -> bool:
        return self in (ArchMode.MI6, ArchMode.IRONHIDE)


class AccessVerdict(str, enum.Enum):
    ALLOW = "allow"
    STALL = "stall"
    DISCARD = "discard"
    FAULT = "fault"


class ProtocolError(RuntimeError):
    pass


class ReconfigBoundError(ProtocolError):
    pass


KERNEL_PID = 0


@dataclass
class SecureKernelState:
    current_map: Optional[ClusterMap] = None
    attested: set = field(default_factory=set)
    rejected: set = field(default_factory=set)
    reconfig_count: dict = field(default_factory=dict)


def attest(kernel: SecureKernelState, process, signature: Optional[str]) -> bool:
    """Admit ``process``; secure processes must present the declared signature."""
    if process.security != Tag.SECURE:
        return True
    if signature is not None and process.token == signature:
        kernel.attested.add(process.pid)
        return True
    kernel.rejected.add(process.pid)
    return False


@dataclass
class TransitionResult:
    entry_exit_cost: float = 0.0
    purge_cost: float = 0.0
    writebacks: int = 0
    drained: int = 0
    purges: int = 0


def enclave_transition(mode: ArchMode, direction: str, mem: Optional[MemorySystem] = None,
                       tiles: Iterable[int] = (), pid: int = KERNEL_PID,
                       charge_purge: bool = True) -> TransitionResult:
    """One enclave entry or exit.

    SGX-like charges the entry/exit latency only. MI6 additionally purges every
    time-shared L1/TLB and all controller queues; ``charge_purge`` says whether
    this transition carries the per-event purge cost (paired accounting charges
    it once per exit+enter pair).
    """
    if direction not in ("enter", "exit"):
        raise ValueError(f"direction must be enter or exit, not {direction!r}")
    if mode not in (ArchMode.SGX_LIKE, ArchMode.MI6):
        raise ProtocolError(f"{mode.value} mode has no enclave transitions")
    res = TransitionResult()
    cfg = mem.cfg if mem is not None else None
    if mem is not None:
        kind = EventKind.ENCLAVE_ENTER if direction == "enter" else EventKind.ENCLAVE_EXIT
        mem.emit(kind, pid)
    if cfg is not None:
        res.entry_exit_cost = cfg.entry_exit_s
    if mode == ArchMode.MI6 and mem is not None:
        tiles = list(tiles)
        res.writebacks = mem.flush_invalidate(tiles)
        res.drained = sum(mem.purge_mc(m) for m in range(cfg.mc_count))
        res.purges = 1
        if charge_purge:
            res.purge_cost = cfg.purge_event_s
        mem.emit(EventKind.FLUSH, pid, detail={"tiles": len(tiles), "writebacks": res.writebacks,
                                               "mc_drained": res.drained, "direction": direction})
    return res


def check_access(mode: ArchMode, cmap: ClusterMap, actor_cluster: Tag, paddr: int,
                 speculative: bool, cfg: MachineConfig, ipc_page: Optional[int] = None) -> AccessVerdict:
    """Hardware region check applied before an access is issued.

    A cross-cluster request stalls until resolved: speculative ones are discarded,
    non-speculative ones fault. Either way no state is touched.
    """
    if not mode.guarded:
        return AccessVerdict.ALLOW
    if ipc_page is not None and paddr // cfg.page_bytes == ipc_page:
        return AccessVerdict.ALLOW
    region = paddr // cfg.region_bytes
    if cmap.region_cluster[region] == actor_cluster:
        return AccessVerdict.ALLOW
    return AccessVerdict.DISCARD if speculative else AccessVerdict.FAULT


@dataclass
class ReconfigResult:
    cost: float
    reassigned: list
    writebacks: int
    rehomed_pages: int
    moved_lines: int


def reassigned_tiles(old_map: ClusterMap, new_map: ClusterMap) -> list[int]:
    return [t for t, (a, b) in enumerate(zip(old_map.tile_cluster, new_map.tile_cluster))
            if a != b and (a != Tag.UNUSED or b != Tag.UNUSED)]


def reconfigure(kernel: SecureKernelState, mem: MemorySystem, old_map: ClusterMap,
                new_map: ClusterMap, app_id: int, page_cluster: dict) -> ReconfigResult:
    """Dynamic hardware isolation: stall, flush reassigned cores, re-home their pages, resume.

    ``page_cluster`` maps every mapped page to the cluster that owns it.
    """
    if kernel.reconfig_count.get(app_id, 0) >= 1:
        raise ReconfigBoundError(f"app {app_id} already reconfigured during this invocation")
    cfg = mem.cfg
    report = validate_cluster_map(cfg, new_map)
    if not report.ok:
        raise ConfigurationError("; ".join(report.violations))
    # controllers are static, except when the secure cluster dissolves entirely
    if tuple(old_map.mc_cluster) != tuple(new_map.mc_cluster) and new_map.tiles_of(Tag.SECURE):
        raise ConfigurationError("memory controllers are statically partitioned")
    if not verify_containment(new_map).ok:
        raise ConfigurationError("new cluster map is not routable")
    moved = reassigned_tiles(old_map, new_map)
    writebacks = mem.flush_invalidate(moved)
    n_pages = n_lines = 0
    if mem.page_map.mode == HomingMode.LOCAL:
        moved_set = set(moved)
        targets = {tag: new_map.tiles_of(tag) for tag in (Tag.SECURE, Tag.INSECURE)}
        rr = {Tag.SECURE: 0, Tag.INSECURE: 0}
        for page in sorted(mem.page_map.page_home):
            home = mem.page_map.page_home[page]
            tag = page_cluster.get(page, Tag.SECURE)
            if home not in moved_set and new_map.tile_cluster[home] == tag:
                continue
            slices = targets[tag] or targets[Tag.INSECURE if tag == Tag.SECURE else Tag.SECURE]
            new_home = slices[rr[tag] % len(slices)]
            rr[tag] += 1
            n_lines += mem.rehome([page], new_home)
            n_pages += 1
    # the new map takes effect only once the stalled cores are clean
    mem.emit(EventKind.RECONFIG, KERNEL_PID, app_id=app_id,
             detail={"tile_cluster": [t.value for t in new_map.tile_cluster],
                     "mc_cluster": [t.value for t in new_map.mc_cluster],
                     "reassigned": moved})
    kernel.current_map = new_map
    kernel.reconfig_count[app_id] = kernel.reconfig_count.get(app_id, 0) + 1
    return ReconfigResult(cfg.reconfig_s, moved, writebacks, n_pages, n_lines)


def context_switch(kernel: SecureKernelState, mem: MemorySystem, cmap: ClusterMap,
                   outgoing_app: int, incoming_app: int, mode: ArchMode,
                   cluster: Tag = Tag.SECURE) -> int:
    """Switch the processes running on ``cluster``; returns the number of purges performed.

    Processes of one application trust each other and co-execute without purging.
    Different applications on the secure cluster purge its cores and controllers;
    the insecure cluster switches freely.
    """
    if outgoing_app == incoming_app or cluster != Tag.SECURE or not mode.guarded:
        return 0
    if mode == ArchMode.IRONHIDE:
        tiles = cmap.tiles_of(Tag.SECURE)
        mcs = cmap.mcs_of(Tag.SECURE)
    else:
        tiles = mem.cfg.usable_tiles()
        mcs = list(range(mem.cfg.mc_count))
    wb = mem.flush_invalidate(tiles)
    drained = sum(mem.purge_mc(m) for m in mcs)
    mem.emit(EventKind.FLUSH, KERNEL_PID, app_id=incoming_app,
             detail={"tiles": len(tiles), "writebacks": wb, "mc_drained": drained,
                     "reason": "context-switch"})
    return 1
