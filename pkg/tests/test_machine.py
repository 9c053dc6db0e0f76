import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilesec.machine import (ClusterMap, ConfigurationError, MachineConfig, MeshCoord, Tag, default_config,
                             default_mc_split, row_block_map, single_cluster_map, split_map,
                             validate_cluster_map)

CFG = default_config()
TAGS = [Tag.SECURE, Tag.INSECURE, Tag.UNUSED]


def direct_recheck(cfg, cmap):
    """Every cluster-map invariant, restated independently of the validator."""
    if (cmap.grid_cols, cmap.grid_rows) != (cfg.grid_cols, cfg.grid_rows):
        return False
    if len(cmap.tile_cluster) != cfg.grid_cols * cfg.grid_rows:
        return False
    if len(cmap.mc_cluster) != cfg.mc_count or len(cmap.region_cluster) != cfg.mc_count * cfg.regions_per_mc:
        return False
    unused = {c.y * cfg.grid_cols + c.x for c in cfg.unused_tiles}
    for t, tag in enumerate(cmap.tile_cluster):
        if t in unused and tag != Tag.UNUSED:
            return False
    if Tag.UNUSED in cmap.mc_cluster or Tag.UNUSED in cmap.region_cluster:
        return False
    for r, tag in enumerate(cmap.region_cluster):
        if tag != cmap.mc_cluster[r // cfg.regions_per_mc]:
            return False
    if not 0 <= cmap.ipc_buffer_region < len(cmap.region_cluster):
        return False
    if cmap.region_cluster[cmap.ipc_buffer_region] != Tag.INSECURE:
        return False
    return sum(t != Tag.UNUSED for t in cmap.tile_cluster) <= cfg.usable_cores


def test_default_config_geometry():
    assert CFG.n_tiles == 72
    assert len(CFG.usable_tiles()) == 64
    assert all(CFG.coord(t).x != 8 for t in CFG.usable_tiles())
    assert CFG.purge_event_s == pytest.approx(0.19e-3)
    assert CFG.reconfig_s == pytest.approx(15e-3)


def test_default_config_passes_own_invariants():
    assert validate_cluster_map(CFG, single_cluster_map(CFG)).ok
    assert validate_cluster_map(CFG, split_map(CFG, 32)).ok


def test_config_roundtrip_and_unknown_field():
    assert MachineConfig.from_dict(CFG.to_dict()) == CFG
    d = CFG.to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigurationError):
        MachineConfig.from_dict(d)


def test_bad_config_rejected():
    with pytest.raises(ConfigurationError):
        MachineConfig(grid_rows=0)


def test_coord_tile_id_inverse():
    for t in range(CFG.n_tiles):
        assert CFG.tile_id(CFG.coord(t)) == t


def test_default_mc_split_secures_top_edge():
    tags = default_mc_split(CFG)
    assert [CFG.mc_positions[m] for m, g in enumerate(tags) if g == Tag.SECURE] == [MeshCoord(0, 0), MeshCoord(1, 0)]


@pytest.mark.parametrize("k", [1, 7, 8, 32, 63])
def test_split_map_counts(k):
    m = split_map(CFG, k)
    assert len(m.tiles_of(Tag.SECURE)) == k
    assert len(m.tiles_of(Tag.INSECURE)) == 64 - k
    assert m.region_cluster[m.ipc_buffer_region] == Tag.INSECURE


def test_row_block_map_requires_insecure_mc():
    with pytest.raises(ConfigurationError):
        row_block_map(CFG, range(8))
    m = row_block_map(CFG, [0, 1])
    assert m.mcs_of(Tag.SECURE) == [0, 1]


def test_cluster_map_dict_roundtrip():
    m = split_map(CFG, 20)
    assert ClusterMap.from_dict(m.to_dict()) == m
    with pytest.raises(ConfigurationError):
        ClusterMap.from_dict({"grid_cols": 9})


def test_validator_reports_specific_problems():
    m = split_map(CFG, 32)
    tiles = list(m.tile_cluster)
    tiles[8] = Tag.SECURE  # an unused tile
    bad = ClusterMap(m.grid_cols, m.grid_rows, tuple(tiles), m.mc_cluster, m.region_cluster,
                     m.ipc_buffer_region, m.mc_positions)
    rep = validate_cluster_map(CFG, bad)
    assert not rep.ok
    assert any("non-usable" in v for v in rep.violations)


@st.composite
def random_maps(draw):
    """Mostly-valid maps with occasional single-field corruption."""
    rng = random.Random(draw(st.integers(0, 2**32 - 1)))
    usable = set(CFG.usable_tiles())
    tiles = [rng.choice(TAGS[:2]) if t in usable else Tag.UNUSED for t in range(CFG.n_tiles)]
    mcs = [rng.choice(TAGS[:2]) for _ in range(CFG.mc_count)]
    if Tag.INSECURE not in mcs:
        mcs[rng.randrange(CFG.mc_count)] = Tag.INSECURE
    regions = [mcs[r // CFG.regions_per_mc] for r in range(CFG.n_regions)]
    ipc = next(r for r, g in enumerate(regions) if g == Tag.INSECURE)
    cols, rows = CFG.grid_cols, CFG.grid_rows
    fault = draw(st.sampled_from(["none", "unused", "region", "ipc", "ipc_range", "mc_unused", "shape",
                                  "short"]))
    if fault == "unused":
        tiles[8] = rng.choice(TAGS[:2])
    elif fault == "region":
        r = rng.randrange(CFG.n_regions)
        regions[r] = Tag.SECURE if regions[r] == Tag.INSECURE else Tag.INSECURE
    elif fault == "ipc":
        sec = [r for r, g in enumerate(regions) if g == Tag.SECURE]
        if sec:
            ipc = sec[0]
    elif fault == "ipc_range":
        ipc = CFG.n_regions + rng.randrange(3)
    elif fault == "mc_unused":
        mcs[0] = Tag.UNUSED
    elif fault == "shape":
        cols = 8
    elif fault == "short":
        tiles = tiles[:-1]
    return ClusterMap(cols, rows, tuple(tiles), tuple(mcs), tuple(regions), ipc, CFG.mc_positions)


@settings(max_examples=400, deadline=None)
@given(random_maps())
def test_validator_matches_direct_recheck(cmap):
    assert validate_cluster_map(CFG, cmap).ok == direct_recheck(CFG, cmap)
