"""Tiled multicore geometry, cost constants and cluster assignments."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence


class ConfigurationError(ValueError):
    """Raised when a machine or cluster description cannot be used."""


class Tag(str, enum.Enum):
    SECURE = "secure"
    INSECURE = "insecure"
    UNUSED = "unused"


class MeshCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class MachineConfig:
    grid_rows: int = 8
    grid_cols: int = 9
    usable_cores: int = 64
    # non-usable tiles; the default leaves a clean 8x8 usable block
    unused_tiles: tuple = tuple(MeshCoord(8, y) for y in range(8))
    l1_bytes: int = 32 * 1024
    l1_assoc: int = 2
    line_bytes: int = 64
    page_bytes: int = 4096
    tlb_entries: int = 32
    l2_slice_bytes: int = 256 * 1024
    l2_assoc: int = 8
    mc_count: int = 4
    mc_positions: tuple = (MeshCoord(0, 0), MeshCoord(1, 0), MeshCoord(6, 7), MeshCoord(7, 7))
    regions_per_mc: int = 4
    region_bytes: int = 256 * 1024 * 1024
    mc_queue_depth: int = 16
    lat_l1_hit: int = 2
    lat_l2_hit: int = 11
    lat_dram: int = 80
    lat_hop: int = 1
    lat_page_walk: int = 50
    stall_window: int = 20
    cost_entry_exit_us: float = 5.0
    cost_purge_event_ms: float = 0.19
    cost_reconfig_ms: float = 15.0
    cost_attest_ms: float = 0.0
    # "paired": one purge charged per exit+enter pair; "per-transition": each one charged
    purge_pairing: str = "paired"
    base_cpi: float = 1.0
    clock_ghz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "unused_tiles", tuple(MeshCoord(*c) for c in self.unused_tiles))
        object.__setattr__(self, "mc_positions", tuple(MeshCoord(*c) for c in self.mc_positions))
        problems = config_problems(self)
        if problems:
            raise ConfigurationError("; ".join(problems))

    # wall-clock costs in seconds
    @property
    def entry_exit_s(self) -> float:
        return self.cost_entry_exit_us * 1e-6

    @property
    def purge_event_s(self) -> float:
        return self.cost_purge_event_ms * 1e-3

    @property
    def reconfig_s(self) -> float:
        return self.cost_reconfig_ms * 1e-3

    @property
    def attest_s(self) -> float:
        return self.cost_attest_ms * 1e-3

    @property
    def n_tiles(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def n_regions(self) -> int:
        return self.mc_count * self.regions_per_mc

    def cycles_to_s(self, cycles: float) -> float:
        return cycles / (self.clock_ghz * 1e9)

    def tile_id(self, c: MeshCoord) -> int:
        return c.y * self.grid_cols + c.x

    def coord(self, tile: int) -> MeshCoord:
        return MeshCoord(tile % self.grid_cols, tile // self.grid_cols)

    def in_grid(self, c: MeshCoord) -> bool:
        return 0 <= c.x < self.grid_cols and 0 <= c.y < self.grid_rows

    def usable_tiles(self) -> list[int]:
        unused = {self.tile_id(c) for c in self.unused_tiles}
        return [t for t in range(self.n_tiles) if t not in unused]

    def mc_of_region(self, region: int) -> int:
        return region // self.regions_per_mc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["unused_tiles"] = [list(c) for c in self.unused_tiles]
        d["mc_positions"] = [list(c) for c in self.mc_positions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MachineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown machine fields: {sorted(extra)}")
        kw = dict(d)
        for key in ("unused_tiles", "mc_positions"):
            if key in kw:
                kw[key] = tuple(MeshCoord(*c) for c in kw[key])
        return cls(**kw)


def config_problems(cfg: MachineConfig) -> list[str]:
    out = []
    if cfg.grid_rows <= 0 or cfg.grid_cols <= 0:
        out.append("grid dimensions must be positive")
        return out
    if cfg.usable_cores > cfg.n_tiles:
        out.append("usable_cores exceeds grid size")
    unused = set(cfg.unused_tiles)
    if any(not cfg.in_grid(c) for c in unused):
        out.append("unused tile outside grid")
    if cfg.n_tiles - len(unused) != cfg.usable_cores:
        out.append("usable_cores must equal grid tiles minus unused tiles")
    if len(cfg.mc_positions) != cfg.mc_count:
        out.append("mc_positions must list mc_count entries")
    if len(set(cfg.mc_positions)) != len(cfg.mc_positions):
        out.append("mc_positions must be pairwise distinct")
    for c in cfg.mc_positions:
        on_edge = c.x in (0, cfg.grid_cols - 1) or c.y in (0, cfg.grid_rows - 1)
        if not cfg.in_grid(c) or not on_edge:
            out.append(f"memory controller {tuple(c)} not on the grid boundary")
    positive = ("l1_bytes", "l1_assoc", "line_bytes", "page_bytes", "tlb_entries",
                "l2_slice_bytes", "l2_assoc", "mc_count", "regions_per_mc", "region_bytes",
                "mc_queue_depth", "lat_l1_hit", "lat_l2_hit", "lat_dram", "lat_hop",
                "lat_page_walk", "cost_entry_exit_us", "cost_purge_event_ms",
                "cost_reconfig_ms", "base_cpi", "clock_ghz")
    for name in positive:
        if getattr(cfg, name) <= 0:
            out.append(f"{name} must be strictly positive")
    if cfg.cost_attest_ms < 0 or cfg.stall_window < 0:
        out.append("attestation cost and stall window must be non-negative")
    if cfg.purge_pairing not in ("paired", "per-transition"):
        out.append("purge_pairing must be 'paired' or 'per-transition'")
    if not out:
        if cfg.l1_bytes % (cfg.line_bytes * cfg.l1_assoc):
            out.append("l1_bytes must be a multiple of line_bytes * l1_assoc")
        if cfg.l2_slice_bytes % (cfg.line_bytes * cfg.l2_assoc):
            out.append("l2_slice_bytes must be a multiple of line_bytes * l2_assoc")
        if cfg.page_bytes % cfg.line_bytes or cfg.region_bytes % cfg.page_bytes:
            out.append("page and region sizes must be line/page aligned")
    return out


def default_config() -> MachineConfig:
    """The 72-tile default: 9x8 mesh, 64 usable cores, 4 edge memory controllers."""
    return MachineConfig()


@dataclass(frozen=True)
class ClusterMap:
    """Per-entity cluster tags. Tile tags are indexed by tile id (row-major)."""

    grid_cols: int
    grid_rows: int
    tile_cluster: tuple
    mc_cluster: tuple
    region_cluster: tuple
    ipc_buffer_region: int
    mc_positions: tuple = field(default=())

    def tag_at(self, c: MeshCoord) -> Tag:
        return self.tile_cluster[c.y * self.grid_cols + c.x]

    def tiles_of(self, tag: Tag) -> list[int]:
        return [t for t, g in enumerate(self.tile_cluster) if g == tag]

    def mcs_of(self, tag: Tag) -> list[int]:
        return [m for m, g in enumerate(self.mc_cluster) if g == tag]

    def regions_of(self, tag: Tag) -> list[int]:
        return [r for r, g in enumerate(self.region_cluster) if g == tag]

    def coord(self, tile: int) -> MeshCoord:
        return MeshCoord(tile % self.grid_cols, tile // self.grid_cols)

    def to_dict(self) -> dict:
        return {
            "grid_cols": self.grid_cols,
            "grid_rows": self.grid_rows,
            "tile_cluster": [t.value for t in self.tile_cluster],
            "mc_cluster": [t.value for t in self.mc_cluster],
            "region_cluster": [t.value for t in self.region_cluster],
            "ipc_buffer_region": self.ipc_buffer_region,
            "mc_positions": [list(c) for c in self.mc_positions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterMap":
        try:
            return cls(
                grid_cols=int(d["grid_cols"]),
                grid_rows=int(d["grid_rows"]),
                tile_cluster=tuple(Tag(t) for t in d["tile_cluster"]),
                mc_cluster=tuple(Tag(t) for t in d["mc_cluster"]),
                region_cluster=tuple(Tag(t) for t in d["region_cluster"]),
                ipc_buffer_region=int(d["ipc_buffer_region"]),
                mc_positions=tuple(MeshCoord(*c) for c in d.get("mc_positions", ())),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"malformed cluster map: {exc}") from exc


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_cluster_map(cfg: MachineConfig, cmap: ClusterMap) -> ValidationReport:
    """Check every cluster-map invariant; violations come back as data."""
    v = []
    if (cmap.grid_cols, cmap.grid_rows) != (cfg.grid_cols, cfg.grid_rows):
        v.append("grid shape differs from machine")
    if len(cmap.tile_cluster) != cfg.n_tiles:
        v.append("tile assignment is not total")
    if len(cmap.mc_cluster) != cfg.mc_count:
        v.append("memory-controller assignment is not total")
    if len(cmap.region_cluster) != cfg.n_regions:
        v.append("region assignment is not total")
    if v:
        return ValidationReport(v)
    if any(not isinstance(t, Tag) for t in cmap.tile_cluster):
        v.append("tile carries an unknown tag")
    if any(t not in (Tag.SECURE, Tag.INSECURE) for t in cmap.mc_cluster):
        v.append("memory controller must be secure or insecure")
    if any(t not in (Tag.SECURE, Tag.INSECURE) for t in cmap.region_cluster):
        v.append("region must be secure or insecure")
    for c in cfg.unused_tiles:
        if cmap.tile_cluster[cfg.tile_id(c)] != Tag.UNUSED:
            v.append(f"non-usable tile {tuple(c)} assigned to a cluster")
    for r, tag in enumerate(cmap.region_cluster):
        if tag != cmap.mc_cluster[cfg.mc_of_region(r)]:
            v.append(f"region/MC tag mismatch: region {r}")
    if not 0 <= cmap.ipc_buffer_region < cfg.n_regions:
        v.append("IPC buffer region out of range")
    elif cmap.region_cluster[cmap.ipc_buffer_region] != Tag.INSECURE:
        v.append("IPC buffer must be insecure")
    used = sum(1 for t in cmap.tile_cluster if t in (Tag.SECURE, Tag.INSECURE))
    if used > cfg.usable_cores:
        v.append("more clustered tiles than usable cores")
    return ValidationReport(v)


def _regions_for(cfg: MachineConfig, mc_tags: Sequence[Tag]) -> tuple:
    return tuple(mc_tags[cfg.mc_of_region(r)] for r in range(cfg.n_regions))


def _first_insecure_region(cfg: MachineConfig, mc_tags: Sequence[Tag]) -> int:
    for r in range(cfg.n_regions):
        if mc_tags[cfg.mc_of_region(r)] == Tag.INSECURE:
            return r
    raise ConfigurationError("no insecure memory controller for the IPC buffer")


def make_map(cfg: MachineConfig, tile_tags: Sequence[Tag], mc_tags: Sequence[Tag],
             ipc_region: Optional[int] = None) -> ClusterMap:
    mc_tags = tuple(mc_tags)
    if ipc_region is None:
        ipc_region = _first_insecure_region(cfg, mc_tags)
    return ClusterMap(cfg.grid_cols, cfg.grid_rows, tuple(tile_tags), mc_tags,
                      _regions_for(cfg, mc_tags), ipc_region, cfg.mc_positions)


def single_cluster_map(cfg: MachineConfig) -> ClusterMap:
    """Every usable tile and controller in one insecure cluster."""
    usable = set(cfg.usable_tiles())
    tags = [Tag.INSECURE if t in usable else Tag.UNUSED for t in range(cfg.n_tiles)]
    return make_map(cfg, tags, [Tag.INSECURE] * cfg.mc_count)


def default_mc_split(cfg: MachineConfig) -> list[Tag]:
    """Static controller partition: the top-edge controllers serve the secure cluster."""
    half = cfg.mc_count // 2
    order = sorted(range(cfg.mc_count), key=lambda m: (cfg.mc_positions[m].y, cfg.mc_positions[m].x))
    tags = [Tag.INSECURE] * cfg.mc_count
    for m in order[:half]:
        tags[m] = Tag.SECURE
    return tags


def split_map(cfg: MachineConfig, cores_secure: int, mc_tags: Optional[Sequence[Tag]] = None) -> ClusterMap:
    """Row-major fill: the first ``cores_secure`` usable tiles are secure, the rest insecure.

    The boundary row is split left (secure) / right (insecure), which Y-X routing
    keeps contained.
    """
    usable = cfg.usable_tiles()
    if not 0 <= cores_secure <= len(usable):
        raise ConfigurationError(f"cannot place {cores_secure} secure cores")
    if cores_secure == 0:
        return single_cluster_map(cfg)
    tags = [Tag.UNUSED] * cfg.n_tiles
    for i, t in enumerate(usable):
        tags[t] = Tag.SECURE if i < cores_secure else Tag.INSECURE
    return make_map(cfg, tags, mc_tags if mc_tags is not None else default_mc_split(cfg))


def row_block_map(cfg: MachineConfig, secure_rows: Sequence[int]) -> ClusterMap:
    """Whole rows to the secure cluster; controllers follow the cluster owning their edge row."""
    rows = set(secure_rows)
    usable = set(cfg.usable_tiles())
    tags = [Tag.UNUSED] * cfg.n_tiles
    for t in usable:
        tags[t] = Tag.SECURE if cfg.coord(t).y in rows else Tag.INSECURE
    mc_tags = [Tag.SECURE if c.y in rows else Tag.INSECURE for c in cfg.mc_positions]
    if Tag.INSECURE not in mc_tags:
        raise ConfigurationError("row split leaves no insecure memory controller")
    return make_map(cfg, tags, mc_tags)
