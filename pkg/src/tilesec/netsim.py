"""Dimension-ordered mesh routing and cluster containment."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .machine import ClusterMap, ConfigurationError, MeshCoord, Tag


class RoutePolicy(str, enum.Enum):
    XY = "XY"
    YX = "YX"


class PacketKind(str, enum.Enum):
    COHERENCE = "coherence"
    MEMORY = "memory"
    IPC = "ipc"


class UncontainableError(ConfigurationError):
    pass


@dataclass(frozen=True)
class Packet:
    src: MeshCoord
    dst: MeshCoord
    kind: PacketKind
    owner_cluster: Tag
    policy: RoutePolicy = RoutePolicy.XY


def _check(c: MeshCoord, grid: Optional[tuple]) -> None:
    if grid is None:
        return
    cols, rows = grid
    if not (0 <= c[0] < cols and 0 <= c[1] < rows):
        raise ConfigurationError(f"coordinate {tuple(c)} outside {cols}x{rows} grid")


def route(src, dst, policy: RoutePolicy = RoutePolicy.XY, grid: Optional[tuple] = None) -> list[MeshCoord]:
    """Routers visited from ``src`` to ``dst`` inclusive. ``grid`` is (cols, rows)."""
    _check(src, grid)
    _check(dst, grid)
    x, y = src
    dx, dy = dst
    path = [MeshCoord(x, y)]
    sx = 1 if dx > x else -1
    sy = 1 if dy > y else -1
    if policy == RoutePolicy.XY:
        for nx in range(x + sx, dx + sx, sx) if x != dx else ():
            path.append(MeshCoord(nx, y))
        for ny in range(y + sy, dy + sy, sy) if y != dy else ():
            path.append(MeshCoord(dx, ny))
    else:
        for ny in range(y + sy, dy + sy, sy) if y != dy else ():
            path.append(MeshCoord(x, ny))
        for nx in range(x + sx, dx + sx, sx) if x != dx else ():
            path.append(MeshCoord(nx, dy))
    return path


def _contained(path, cluster: Tag, cmap: ClusterMap, mc: Optional[int]) -> bool:
    cols = cmap.grid_cols
    tiles = cmap.tile_cluster
    body = path
    if mc is not None:
        # the controller's own tag stands in for the endpoint router
        if cmap.mc_cluster[mc] != cluster:
            return False
        body = path[:-1]
    for c in body:
        if tiles[c[1] * cols + c[0]] != cluster:
            return False
    return True


def choose_policy(cmap: ClusterMap, src, dst, kind: PacketKind, mc: Optional[int] = None) -> RoutePolicy:
    """Pick the dimension order that keeps a packet inside its cluster.

    ``mc`` names the memory controller when ``dst`` is a controller position.
    Interaction packets may cross clusters and always use X-Y.
    """
    if kind == PacketKind.IPC:
        return RoutePolicy.XY
    grid = (cmap.grid_cols, cmap.grid_rows)
    cluster = cmap.tag_at(MeshCoord(*src))
    if cluster == Tag.UNUSED:
        raise UncontainableError(f"source {tuple(src)} is not in a cluster")
    if mc is None and cmap.tag_at(MeshCoord(*dst)) != cluster:
        raise UncontainableError(f"{tuple(src)} -> {tuple(dst)} crosses clusters for a {kind.value} packet")
    for policy in (RoutePolicy.XY, RoutePolicy.YX):
        if _contained(route(src, dst, policy, grid), cluster, cmap, mc):
            return policy
    raise UncontainableError(f"uncontainable cluster shape: {tuple(src)} -> {tuple(dst)}")


@dataclass
class ContainmentReport:
    violations: list = field(default_factory=list)
    pairs_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"routable": self.ok, "pairs_checked": self.pairs_checked,
                "violations": self.violations}


def verify_containment(cmap: ClusterMap) -> ContainmentReport:
    """Enumerate every intra-cluster tile pair and tile-to-owned-MC pair."""
    rep = ContainmentReport()
    for cluster in (Tag.SECURE, Tag.INSECURE):
        coords = [cmap.coord(t) for t in cmap.tiles_of(cluster)]
        mcs = cmap.mcs_of(cluster)
        for s in coords:
            for d in coords:
                if s == d:
                    continue
                rep.pairs_checked += 1
                try:
                    choose_policy(cmap, s, d, PacketKind.COHERENCE)
                except UncontainableError:
                    rep.violations.append({"cluster": cluster.value, "src": list(s), "dst": list(d)})
            for m in mcs:
                rep.pairs_checked += 1
                try:
                    choose_policy(cmap, s, cmap.mc_positions[m], PacketKind.MEMORY, mc=m)
                except UncontainableError:
                    rep.violations.append({"cluster": cluster.value, "src": list(s), "mc": m})
    return rep
