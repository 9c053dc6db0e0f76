"""Offline strong-isolation checker over a simulation event log."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .events import EventKind, EventLog, SimEvent
from .machine import ClusterMap, Tag

RULES = ("R1", "R2", "R3", "R4", "R5", "R6", "R7")

RULE_TEXT = {
    "R1": "non-IPC packet crossed a foreign router",
    "R2": "cache access touched a foreign cluster's structure",
    "R3": "memory-controller enqueue crossed the controller partition",
    "R4": "access hit residual state of another cluster",
    "R5": "state mutation by a discarded speculative access",
    "R6": "more than one reconfiguration in one invocation",
    "R7": "IPC buffer homed outside insecure resources",
}

_MUTATING = (EventKind.CACHE_ACCESS, EventKind.MC_ENQUEUE)


@dataclass
class ViolationReport:
    violations: list = field(default_factory=list)
    rules_checked: list = field(default_factory=lambda: list(RULES))
    events_checked: int = 0

    @property
    def verdict(self) -> str:
        return "violated" if self.violations else "clean"

    def by_rule(self) -> dict:
        out = {r: 0 for r in self.rules_checked}
        for v in self.violations:
            out[v["rule"]] += 1
        return out

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "rules_checked": self.rules_checked,
                "events_checked": self.events_checked, "counts": self.by_rule(),
                "violations": self.violations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self, limit: int = 10) -> str:
        lines = [f"verdict: {self.verdict} ({self.events_checked} events, {len(self.violations)} violations)"]
        for rule, n in self.by_rule().items():
            lines.append(f"  {rule} {RULE_TEXT[rule]}: {n}")
        for v in self.violations[:limit]:
            lines.append(f"  [{v['rule']}] event {v['event']}: {v['description']}")
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


def check(log: EventLog, cmap: Optional[ClusterMap] = None) -> ViolationReport:
    """Replay ``log`` and report every isolation violation.

    The initial cluster map comes from ``cmap`` or the log header; each
    Reconfig event installs the tile assignment it carries.
    """
    h = log.header
    if cmap is None:
        cmap = ClusterMap.from_dict(h["map"])
    tiles = list(cmap.tile_cluster)
    mc_tag = list(cmap.mc_cluster)
    region_tag = list(cmap.region_cluster)
    cols = cmap.grid_cols
    spatial = bool(h.get("spatial", False))
    pid_cluster = {int(k): Tag(v) for k, v in h.get("pid_cluster", {}).items()}
    pid_cluster.setdefault(0, Tag.SECURE)
    ipc_page = h.get("ipc_page")
    page_bytes = h.get("page_bytes", 4096)
    region_bytes = h.get("region_bytes", 256 * 1024 * 1024)
    rep = ViolationReport()
    add = rep.violations.append

    def cl(pid):
        return pid_cluster.get(pid, Tag.INSECURE)

    if ipc_page is not None:
        if region_tag[ipc_page * page_bytes // region_bytes] != Tag.INSECURE:
            add({"rule": "R7", "event": -1, "description": "IPC page lies in a secure DRAM region"})
        home = h.get("ipc_home")
        if home is not None and tiles[home] != Tag.INSECURE:
            add({"rule": "R7", "event": -1, "description": f"IPC page homed on {tiles[home].value} tile {home}"})

    discarded: set = set()
    # IPC re-homing happens during a reconfiguration stall; judge it by the map installed next
    pending_ipc: list = []

    def settle():
        for idx, home in pending_ipc:
            if tiles[home] != Tag.INSECURE:
                add({"rule": "R7", "event": idx, "description": f"IPC page re-homed to tile {home}"})
        pending_ipc.clear()

    reconfigs: dict = {}
    for i, ev in enumerate(log.events):
        rep.events_checked += 1
        kind = ev.kind
        actor = cl(ev.pid)
        is_ipc = ipc_page is not None and ev.page == ipc_page
        if ev.access_id is not None and ev.access_id in discarded and kind in _MUTATING:
            add({"rule": "R5", "event": i, "description": f"access {ev.access_id} mutated state after discard"})
        if kind == EventKind.PACKET_HOP:
            if spatial and ev.pkt != "ipc" and not is_ipc and ev.path:
                body = ev.path[:-1] if ev.mc is not None else ev.path
                for x, y in body:
                    if tiles[y * cols + x] != actor:
                        add({"rule": "R1", "event": i,
                             "description": f"{ev.pkt} packet of {actor.value} pid {ev.pid} at router ({x},{y})"})
                        break
                if ev.mc is not None and mc_tag[ev.mc] != actor:
                    add({"rule": "R1", "event": i,
                         "description": f"{ev.pkt} packet of {actor.value} pid {ev.pid} reached foreign MC {ev.mc}"})
        elif kind == EventKind.CACHE_ACCESS:
            if not is_ipc:
                foreign_slice = tiles[ev.tile] != actor
                if ev.structure == "L2" and foreign_slice:
                    add({"rule": "R2", "event": i,
                         "description": f"{actor.value} pid {ev.pid} used L2 slice {ev.tile} ({tiles[ev.tile].value})"})
                elif ev.structure == "L1" and spatial and foreign_slice:
                    add({"rule": "R2", "event": i,
                         "description": f"{actor.value} pid {ev.pid} used L1 of tile {ev.tile} ({tiles[ev.tile].value})"})
                if ev.hit and ev.owner is not None and cl(ev.owner) != actor:
                    add({"rule": "R4", "event": i,
                         "description": f"pid {ev.pid} hit {ev.structure} line {ev.line} left by pid {ev.owner}"})
                elif ev.detail and ev.detail.get("tlb_hit") and ev.detail.get("tlb_owner") is not None \
                        and cl(ev.detail["tlb_owner"]) != actor:
                    add({"rule": "R4", "event": i,
                         "description": f"pid {ev.pid} hit TLB entry of pid {ev.detail['tlb_owner']}"})
        elif kind == EventKind.MC_ENQUEUE:
            if not is_ipc and (mc_tag[ev.mc] != actor or
                               (ev.region is not None and region_tag[ev.region] != actor)):
                add({"rule": "R3", "event": i,
                     "description": f"{actor.value} pid {ev.pid} enqueued at MC {ev.mc} ({mc_tag[ev.mc].value})"})
        elif kind == EventKind.SPEC_DISCARD:
            if ev.access_id is not None:
                discarded.add(ev.access_id)
        elif kind == EventKind.RECONFIG:
            app = ev.app_id if ev.app_id is not None else h.get("app_id")
            reconfigs[app] = reconfigs.get(app, 0) + 1
            if reconfigs[app] > 1:
                add({"rule": "R6", "event": i, "description": f"reconfiguration #{reconfigs[app]} for app {app}"})
            new_tiles = (ev.detail or {}).get("tile_cluster")
            if new_tiles is not None:
                tiles = [Tag(t) for t in new_tiles]
            new_mcs = (ev.detail or {}).get("mc_cluster")
            if new_mcs is not None:
                mc_tag = [Tag(t) for t in new_mcs]
                per = len(region_tag) // len(mc_tag)
                region_tag = [mc_tag[r // per] for r in range(len(region_tag))]
            settle()
        elif kind == EventKind.REHOME:
            if is_ipc and ev.home is not None:
                pending_ipc.append((i, ev.home))
    settle()
    return rep


def _final_map(log: EventLog) -> ClusterMap:
    d = dict(log.header["map"])
    for ev in log.events:
        if ev.kind == EventKind.RECONFIG and ev.detail:
            d["tile_cluster"] = ev.detail.get("tile_cluster", d["tile_cluster"])
            if "mc_cluster" in ev.detail:
                d["mc_cluster"] = ev.detail["mc_cluster"]
                per = len(d["region_cluster"]) // len(d["mc_cluster"])
                d["region_cluster"] = [d["mc_cluster"][r // per] for r in range(len(d["region_cluster"]))]
    return ClusterMap.from_dict(d)


def inject_fault(log: EventLog, rule: str) -> EventLog:
    """Copy of a clean spatial log with one event appended that breaks exactly ``rule``.

    The log needs a secure and an insecure process; R5 additionally needs at
    least one SpecDiscard record.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    cmap = _final_map(log)
    h = log.header
    pid_cluster = {int(k): Tag(v) for k, v in h["pid_cluster"].items()}
    sec_pid = next(p for p, t in sorted(pid_cluster.items()) if t == Tag.SECURE and p != 0)
    ins_pid = next(p for p, t in sorted(pid_cluster.items()) if t == Tag.INSECURE)
    sec_tile = cmap.tiles_of(Tag.SECURE)[0]
    ins_tile = cmap.tiles_of(Tag.INSECURE)[0]
    per_mc = len(cmap.region_cluster) // len(cmap.mc_cluster)
    ins_mc = cmap.mcs_of(Tag.INSECURE)[0]
    sec_region = cmap.regions_of(Tag.SECURE)[0]
    sec_page = sec_region * h["region_bytes"] // h["page_bytes"]
    sec_line = sec_page * (h["page_bytes"] // h["line_bytes"])
    t = log.events[-1].time if log.events else 0.0
    sc = Tag.SECURE.value
    if rule == "R1":
        a, b = cmap.coord(sec_tile), cmap.coord(ins_tile)
        ev = SimEvent(t, EventKind.PACKET_HOP, sec_pid, sc, path=[[a.x, a.y], [b.x, b.y]], pkt="coherence",
                      page=sec_page)
    elif rule == "R2":
        ev = SimEvent(t, EventKind.CACHE_ACCESS, sec_pid, sc, structure="L2", tile=ins_tile,
                      line=sec_line, page=sec_page, hit=False, write=False)
    elif rule == "R3":
        ev = SimEvent(t, EventKind.MC_ENQUEUE, sec_pid, sc, mc=ins_mc, region=ins_mc * per_mc,
                      line=sec_line, page=sec_page)
    elif rule == "R4":
        ev = SimEvent(t, EventKind.CACHE_ACCESS, sec_pid, sc, structure="L1", tile=sec_tile,
                      line=sec_line, page=sec_page, hit=True, owner=ins_pid, write=False)
    elif rule == "R5":
        disc = next((e for e in log.events if e.kind == EventKind.SPEC_DISCARD), None)
        if disc is None:
            raise ValueError("R5 injection needs a log with a SpecDiscard record")
        ev = SimEvent(t, EventKind.CACHE_ACCESS, disc.pid, disc.cluster, structure="L1",
                      tile=cmap.tiles_of(Tag(disc.cluster))[0], line=0, page=None, hit=False,
                      write=False, access_id=disc.access_id)
    elif rule == "R6":
        ev = SimEvent(t, EventKind.RECONFIG, 0, sc, app_id=h.get("app_id"),
                      detail={"tile_cluster": [g.value for g in cmap.tile_cluster],
                              "mc_cluster": [g.value for g in cmap.mc_cluster], "reassigned": []})
    else:
        ev = SimEvent(t, EventKind.REHOME, 0, sc, page=h["ipc_page"], home=sec_tile,
                      detail={"old_home": ins_tile})
    return EventLog(dict(h), list(log.events) + [ev])
