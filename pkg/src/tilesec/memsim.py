"""Private L1/TLB, distributed L2 slices, memory controllers and DRAM regions.

Caches are functional: every slot stores the line's value, so reads after any
sequence of evictions, flushes and re-homing return the last written value.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .events import EventKind, EventLog, SimEvent
from .machine import ConfigurationError, MachineConfig


class PageFault(LookupError):
    pass


class UnsupportedModeError(RuntimeError):
    pass


_MASK64 = (1 << 64) - 1


class HomingMode(str, enum.Enum):
    LOCAL = "local"
    HASHED = "hashed"


class Slot:
    __slots__ = ("dirty", "owner", "value")

    def __init__(self, dirty=False, owner=0, value=0):
        self.dirty = dirty
        self.owner = owner
        self.value = value

    def astuple(self):
        return (self.dirty, self.owner, self.value)


class Cache:
    """Set-associative LRU cache keyed by physical line address.

    Each set is an insertion-ordered dict; the first key is the LRU victim.
    """

    def __init__(self, size_bytes: int, assoc: int, line_bytes: int, fold_index: bool = False):
        self.assoc = assoc
        self.nsets = size_bytes // (line_bytes * assoc)
        self.fold_index = fold_index
        self.sets: dict[int, dict] = {}

    def index(self, line: int) -> int:
        if self.fold_index:
            # hashed index so page-granular homing does not alias into a few sets
            return (((line * 0x9E3779B97F4A7C15) & _MASK64) >> 32) % self.nsets
        return line % self.nsets

    def peek(self, line: int) -> Optional[Slot]:
        s = self.sets.get(self.index(line))
        return s.get(line) if s else None

    def lookup(self, line: int) -> Optional[Slot]:
        s = self.sets.get(self.index(line))
        if not s:
            return None
        slot = s.pop(line, None)
        if slot is not None:
            s[line] = slot
        return slot

    def insert(self, line: int, slot: Slot):
        """Install ``line``; returns the evicted (line, slot) or None."""
        idx = self.index(line)
        s = self.sets.get(idx)
        if s is None:
            s = self.sets[idx] = {}
        victim = None
        if line in s:
            del s[line]
        elif len(s) >= self.assoc:
            vline = next(iter(s))
            victim = (vline, s.pop(vline))
        s[line] = slot
        return victim

    def remove(self, line: int) -> Optional[Slot]:
        s = self.sets.get(self.index(line))
        return s.pop(line, None) if s else None

    def items(self):
        for idx in sorted(self.sets):
            yield from self.sets[idx].items()

    def valid_count(self) -> int:
        return sum(len(s) for s in self.sets.values())

    def dirty_count(self) -> int:
        return sum(1 for _, slot in self.items() if slot.dirty)

    def clear(self) -> None:
        self.sets.clear()

    def check_invariants(self) -> None:
        for idx, s in self.sets.items():
            assert len(s) <= self.assoc
            for line in s:
                assert self.index(line) == idx

    def snapshot(self):
        return tuple((idx, tuple((l, sl.astuple()) for l, sl in self.sets[idx].items()))
                     for idx in sorted(self.sets) if self.sets[idx])


class Tlb:
    """Fully associative LRU page-translation cache; entries record the owning pid."""

    def __init__(self, entries: int):
        self.capacity = entries
        self.entries: dict[int, int] = {}

    def touch(self, page: int, pid: int):
        """Returns (hit, previous owner)."""
        owner = self.entries.pop(page, None)
        if owner is None:
            if len(self.entries) >= self.capacity:
                del self.entries[next(iter(self.entries))]
            self.entries[page] = pid
            return False, None
        self.entries[page] = pid
        return True, owner

    def valid_count(self) -> int:
        return len(self.entries)

    def clear(self) -> None:
        self.entries.clear()

    def snapshot(self):
        return tuple(self.entries.items())


def flush_invalidate(structures: Iterable, writeback: Optional[Callable] = None) -> int:
    """Write back every dirty line and invalidate everything; returns the writeback count.

    ``structures`` may mix :class:`Cache` and :class:`Tlb` objects.
    """
    count = 0
    for st in structures:
        if isinstance(st, Cache):
            for line, slot in list(st.items()):
                if slot.dirty:
                    count += 1
                    if writeback is not None:
                        writeback(line, slot)
        st.clear()
    return count


@dataclass
class PageMap:
    mode: HomingMode
    line_bytes: int
    page_bytes: int
    slices: tuple = ()
    page_home: dict = field(default_factory=dict)

    def map_page(self, page: int, home: Optional[int] = None) -> None:
        if self.mode == HomingMode.LOCAL and home is None:
            raise ConfigurationError("local homing needs a home slice")
        self.page_home[page] = home

    def home(self, paddr: int) -> int:
        page = paddr // self.page_bytes
        try:
            home = self.page_home[page]
        except KeyError:
            raise PageFault(f"page {page} is not mapped") from None
        if self.mode == HomingMode.HASHED:
            return self.slices[(paddr // self.line_bytes) % len(self.slices)]
        return home


def home_of(pmap: PageMap, paddr: int) -> int:
    return pmap.home(paddr)


@dataclass(frozen=True)
class DramRegionMap:
    region_bytes: int
    regions_per_mc: int
    n_regions: int

    @classmethod
    def for_config(cls, cfg: MachineConfig) -> "DramRegionMap":
        return cls(cfg.region_bytes, cfg.regions_per_mc, cfg.n_regions)

    def region_of(self, paddr: int) -> int:
        r = paddr // self.region_bytes
        if not 0 <= r < self.n_regions:
            raise PageFault(f"address {paddr:#x} outside physical memory")
        return r

    def mc_of(self, region: int) -> int:
        return region // self.regions_per_mc


class AccessResult:
    __slots__ = ("latency", "level", "evictions", "events", "value", "l1_hit", "tlb_hit")

    def __init__(self):
        self.latency = 0
        self.level = "L1"
        self.evictions = []
        self.events = []
        self.value = None
        self.l1_hit = False
        self.tlb_hit = False


def _manhattan(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


class MemorySystem:
    """The memory hierarchy of one simulation run.

    ``router(src, dst, cluster, kind, mc)`` returns the router path of a packet;
    the engine installs a cluster-aware one. ``trace`` controls whether
    per-access CacheAccess/PacketHop/McEnqueue records are logged.
    """

    def __init__(self, cfg: MachineConfig, page_map: PageMap, log: Optional[EventLog] = None,
                 trace: bool = True):
        self.cfg = cfg
        self.page_map = page_map
        self.regions = DramRegionMap.for_config(cfg)
        self.log = log
        self.trace = trace and log is not None
        self.l1: dict[int, Cache] = {}
        self.tlb: dict[int, Tlb] = {}
        self.l2: dict[int, Cache] = {}
        self.dram: dict[int, int] = {}
        self.mcq = [deque() for _ in range(cfg.mc_count)]
        self.sharers: dict[int, set] = {}
        self.pid_cluster: dict[int, str] = {0: "secure"}
        self.page_owner: dict[int, int] = {}
        self.ipc_page: Optional[int] = None
        self.now = 0.0
        self.router: Optional[Callable] = None
        self._coords = [cfg.coord(t) for t in range(cfg.n_tiles)]
        self._collect = None

    # structure accessors -------------------------------------------------
    def l1_of(self, tile: int) -> Cache:
        c = self.l1.get(tile)
        if c is None:
            c = self.l1[tile] = Cache(self.cfg.l1_bytes, self.cfg.l1_assoc, self.cfg.line_bytes)
        return c

    def tlb_of(self, tile: int) -> Tlb:
        t = self.tlb.get(tile)
        if t is None:
            t = self.tlb[tile] = Tlb(self.cfg.tlb_entries)
        return t

    def l2_of(self, tile: int) -> Cache:
        c = self.l2.get(tile)
        if c is None:
            c = self.l2[tile] = Cache(self.cfg.l2_slice_bytes, self.cfg.l2_assoc,
                                      self.cfg.line_bytes, fold_index=True)
        return c

    def home_of(self, paddr: int) -> int:
        return self.page_map.home(paddr)

    def cluster_of(self, pid: int) -> str:
        return self.pid_cluster.get(pid, "insecure")

    # event helpers --------------------------------------------------------
    def emit(self, kind: EventKind, pid: int, **kw) -> None:
        if self.log is None:
            return
        ev = SimEvent(self.now, kind, pid, self.cluster_of(pid), **kw)
        self.log.append(ev)
        if self._collect is not None:
            self._collect.append(ev)

    def _packet(self, src_tile: int, dst_tile: Optional[int], pid: int, page: int,
                kind: str, mc: Optional[int] = None) -> int:
        src = self._coords[src_tile]
        dst = self.cfg.mc_positions[mc] if mc is not None else self._coords[dst_tile]
        if not self.trace:
            return _manhattan(src, dst)
        pkt = "ipc" if page == self.ipc_page else kind
        cluster = self.cluster_of(pid)
        if self.router is not None:
            path = self.router(src, dst, cluster, pkt, mc)
        else:
            from .netsim import route
            path = route(src, dst)
        self.emit(EventKind.PACKET_HOP, pid, path=[[c[0], c[1]] for c in path], pkt=pkt, mc=mc,
                  page=page)
        return len(path) - 1

    # lower levels ---------------------------------------------------------
    def _dram_read(self, line: int) -> int:
        mc = self.regions.mc_of(self.regions.region_of(line * self.cfg.line_bytes))
        for qline, val in reversed(self.mcq[mc]):
            if qline == line:
                return val
        return self.dram.get(line, 0)

    def _mc_write(self, line: int, slot: Slot, from_tile: int) -> None:
        lb = self.cfg.line_bytes
        region = self.regions.region_of(line * lb)
        mc = self.regions.mc_of(region)
        page = line * lb // self.cfg.page_bytes
        self._packet(from_tile, None, slot.owner, page, "memory", mc=mc)
        q = self.mcq[mc]
        q.append((line, slot.value))
        if len(q) > self.cfg.mc_queue_depth:
            oline, oval = q.popleft()
            self.dram[oline] = oval
        if self.trace:
            self.emit(EventKind.MC_ENQUEUE, slot.owner, mc=mc, region=region, line=line, page=page)

    def _l2_install(self, home: int, line: int, slot: Slot) -> None:
        victim = self.l2_of(home).insert(line, slot)
        if victim is not None and victim[1].dirty:
            self._mc_write(victim[0], victim[1], home)

    def _l2_writeback(self, line: int, slot: Slot, from_tile: int) -> None:
        lb = self.cfg.line_bytes
        paddr = line * lb
        page = paddr // self.cfg.page_bytes
        home = self.page_map.home(paddr)
        self._packet(from_tile, home, slot.owner, page, "coherence")
        l2 = self.l2_of(home)
        existing = l2.lookup(line)
        if self.trace:
            self.emit(EventKind.CACHE_ACCESS, slot.owner, structure="L2", tile=home, line=line,
                      page=page, hit=existing is not None, write=True)
        if existing is not None:
            existing.value = slot.value
            existing.dirty = True
            existing.owner = slot.owner
        else:
            self._l2_install(home, line, Slot(True, slot.owner, slot.value))

    def _drop_sharers(self, line: int, keep: int) -> None:
        sh = self.sharers.get(line)
        if not sh:
            return
        for t in sorted(sh):
            if t == keep:
                continue
            s = self.l1[t].remove(line)
            if s is not None and s.dirty:
                self._l2_writeback(line, s, t)
        self.sharers[line] = {keep}

    # the access path ------------------------------------------------------
    def access(self, core: int, paddr: int, is_write: bool = False, speculative: bool = False,
               pid: int = 0, value: Optional[int] = None, access_id: Optional[int] = None) -> AccessResult:
        cfg = self.cfg
        res = AccessResult()
        trace = self.trace
        if trace:
            self._collect = res.events
        line = paddr // cfg.line_bytes
        page = paddr // cfg.page_bytes
        self.regions.region_of(paddr)
        home = self.page_map.home(paddr)
        lat = 0
        tlb_hit, tlb_owner = self.tlb_of(core).touch(page, pid)
        res.tlb_hit = tlb_hit
        if not tlb_hit:
            lat += cfg.lat_page_walk
        l1 = self.l1_of(core)
        slot = l1.lookup(line)
        if slot is not None:
            res.l1_hit = True
            if trace:
                self.emit(EventKind.CACHE_ACCESS, pid, structure="L1", tile=core, line=line, page=page,
                          hit=True, owner=slot.owner, write=is_write, access_id=access_id,
                          detail={"tlb_hit": tlb_hit, "tlb_owner": tlb_owner} if tlb_hit else None)
            if is_write:
                self._drop_sharers(line, core)
                slot.dirty = True
                slot.value = value
            slot.owner = pid
            res.value = slot.value
            res.latency = lat + cfg.lat_l1_hit
            self._collect = None
            return res
        if trace:
            self.emit(EventKind.CACHE_ACCESS, pid, structure="L1", tile=core, line=line, page=page,
                      hit=False, write=is_write, access_id=access_id,
                      detail={"tlb_hit": tlb_hit, "tlb_owner": tlb_owner} if tlb_hit else None)
        # another L1 may hold the only up-to-date copy
        sh = self.sharers.get(line)
        if sh:
            for t in sorted(sh):
                s = self.l1[t].peek(line)
                if s is not None and s.dirty:
                    self._l2_writeback(line, s, t)
                    s.dirty = False
        hops = self._packet(core, home, pid, page, "coherence")
        l2 = self.l2_of(home)
        s2 = l2.lookup(line)
        if trace:
            self.emit(EventKind.CACHE_ACCESS, pid, structure="L2", tile=home, line=line, page=page,
                      hit=s2 is not None, owner=s2.owner if s2 is not None else None,
                      write=is_write, access_id=access_id)
        lat += cfg.lat_l1_hit + hops * cfg.lat_hop + cfg.lat_l2_hit
        if s2 is not None:
            res.level = "L2"
            val = s2.value
            s2.owner = pid
        else:
            res.level = "Dram"
            mc = self.regions.mc_of(self.regions.region_of(paddr))
            self._packet(home, None, pid, page, "memory", mc=mc)
            val = self._dram_read(line)
            self._l2_install(home, line, Slot(False, pid, val))
            lat += cfg.lat_dram
        new = Slot(False, pid, val)
        victim = l1.insert(line, new)
        if victim is not None:
            vline, vslot = victim
            vs = self.sharers.get(vline)
            if vs is not None:
                vs.discard(core)
                if not vs:
                    del self.sharers[vline]
            if vslot.dirty:
                self._l2_writeback(vline, vslot, core)
            res.evictions.append(("L1", vline, vslot.dirty))
        self.sharers.setdefault(line, set()).add(core)
        if is_write:
            self._drop_sharers(line, core)
            new.dirty = True
            new.value = value
        res.value = new.value
        res.latency = lat
        self._collect = None
        return res

    # purge primitives -----------------------------------------------------
    def flush_invalidate(self, tiles: Iterable[int]) -> int:
        """Flush-and-invalidate the L1s and TLBs of ``tiles``; returns writebacks."""
        total = 0
        for t in sorted(set(tiles)):
            l1 = self.l1.get(t)
            if l1 is not None:
                for line, _ in list(l1.items()):
                    vs = self.sharers.get(line)
                    if vs is not None:
                        vs.discard(t)
                        if not vs:
                            del self.sharers[line]
                total += flush_invalidate([l1], lambda ln, sl, t=t: self._l2_writeback(ln, sl, t))
            tlb = self.tlb.get(t)
            if tlb is not None:
                tlb.clear()
        return total

    def purge_mc(self, mc: int) -> int:
        q = self.mcq[mc]
        n = len(q)
        while q:
            line, val = q.popleft()
            self.dram[line] = val
        return n

    def rehome(self, pages: Iterable[int], new_home: int) -> int:
        """Move pages to ``new_home``: invalidate old-slice lines, dirty ones go to DRAM."""
        if self.page_map.mode != HomingMode.LOCAL:
            raise UnsupportedModeError("re-homing requires local homing")
        lb = self.cfg.line_bytes
        per_page = self.cfg.page_bytes // lb
        moved = 0
        for page in pages:
            old = self.page_map.page_home.get(page)
            if old is None:
                raise PageFault(f"page {page} is not mapped")
            l2 = self.l2.get(old)
            if l2 is not None and old != new_home:
                base = page * per_page
                for line in range(base, base + per_page):
                    s = l2.remove(line)
                    if s is None:
                        continue
                    moved += 1
                    if s.dirty:
                        self._mc_write(line, s, old)
            self.page_map.page_home[page] = new_home
            owner = self.page_owner.get(page, 0)
            self.emit(EventKind.REHOME, owner, page=page, home=new_home, detail={"old_home": old})
        return moved

    # inspection -------------------------------------------------------------
    def read_through(self, paddr: int) -> int:
        """Current architectural value of a line without touching any state."""
        line = paddr // self.cfg.line_bytes
        for t in sorted(self.sharers.get(line, ())):
            s = self.l1[t].peek(line)
            if s is not None and s.dirty:
                return s.value
        for t in sorted(self.sharers.get(line, ())):
            s = self.l1[t].peek(line)
            if s is not None:
                return s.value
        for l2 in self.l2.values():
            s = l2.peek(line)
            if s is not None:
                return s.value
        return self._dram_read(line)

    def snapshot(self):
        return (
            tuple((t, c.snapshot()) for t, c in sorted(self.l1.items())),
            tuple((t, c.snapshot()) for t, c in sorted(self.tlb.items())),
            tuple((t, c.snapshot()) for t, c in sorted(self.l2.items())),
            tuple(tuple(q) for q in self.mcq),
            tuple(sorted(self.dram.items())),
            tuple(sorted((k, tuple(sorted(v))) for k, v in self.sharers.items())),
            tuple(sorted(self.page_map.page_home.items())),
        )
