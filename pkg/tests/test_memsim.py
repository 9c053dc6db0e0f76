import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilesec.machine import default_config
from tilesec.memsim import (Cache, HomingMode, MemorySystem, PageFault, PageMap, Slot, Tlb,
                            UnsupportedModeError, flush_invalidate, home_of)

CFG = default_config()
LB = CFG.line_bytes
PB = CFG.page_bytes


def make_mem(mode=HomingMode.LOCAL, pages=64):
    tiles = CFG.usable_tiles()
    pmap = PageMap(mode, LB, PB, slices=tuple(tiles))
    for p in range(pages):
        pmap.map_page(p, tiles[p % len(tiles)])
    return MemorySystem(CFG, pmap, None, trace=False)


def test_cache_lru_eviction():
    c = Cache(4 * 64, 2, 64)  # 2 sets of 2 ways
    c.insert(0, Slot())
    c.insert(2, Slot())
    c.lookup(0)
    victim = c.insert(4, Slot())
    assert victim[0] == 2
    c.check_invariants()


def test_tlb_reports_previous_owner():
    t = Tlb(2)
    assert t.touch(5, 1) == (False, None)
    assert t.touch(5, 2) == (True, 1)
    t.touch(6, 1)
    t.touch(7, 1)
    assert t.valid_count() == 2 and 5 not in t.entries


def test_home_of_local_and_hashed():
    local = PageMap(HomingMode.LOCAL, LB, PB, slices=(0, 1, 2))
    local.map_page(3, 2)
    assert home_of(local, 3 * PB + 100) == 2
    hashed = PageMap(HomingMode.HASHED, LB, PB, slices=(0, 1, 2))
    hashed.map_page(3)
    homes = {home_of(hashed, 3 * PB + i * LB) for i in range(6)}
    assert homes == {0, 1, 2}
    with pytest.raises(PageFault):
        home_of(local, 99 * PB)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flush_invalidate_randomized(seed):
    rng = random.Random(seed)
    for _ in range(10):
        c = Cache(rng.choice([1, 2, 4]) * 1024, rng.choice([1, 2, 4]), 64)
        t = Tlb(8)
        for _ in range(rng.randrange(200)):
            c.insert(rng.randrange(512), Slot(rng.random() < 0.4, 1, rng.randrange(100)))
            t.touch(rng.randrange(64), 1)
        dirty = c.dirty_count()
        seen = []
        assert flush_invalidate([c, t], lambda ln, sl: seen.append(ln)) == dirty
        assert len(seen) == dirty
        assert c.valid_count() == 0 and t.valid_count() == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["r", "w", "flush", "rehome", "purge"]), st.integers(0, 63),
                          st.integers(0, 40), st.integers(0, 7)), max_size=120),
       st.sampled_from(list(HomingMode)))
def test_data_conservation_against_flat_memory(ops, mode):
    mem = make_mem(mode, pages=8)
    tiles = CFG.usable_tiles()
    flat = {}
    stamp = 0
    for op, tile_i, line_i, page in ops:
        core = tiles[tile_i]
        paddr = page * PB + line_i * LB
        if op == "w":
            stamp += 1
            mem.access(core, paddr, True, pid=1, value=stamp)
            flat[paddr] = stamp
        elif op == "r":
            assert mem.access(core, paddr, pid=1).value == flat.get(paddr, 0)
        elif op == "flush":
            mem.flush_invalidate([core])
        elif op == "rehome" and mode == HomingMode.LOCAL:
            mem.rehome([page], tiles[(tile_i * 7) % len(tiles)])
        elif op == "purge":
            mem.purge_mc(line_i % CFG.mc_count)
        for a, v in flat.items():
            assert mem.read_through(a) == v
    # no line is replicated across L2 slices
    where = {}
    for t, l2 in mem.l2.items():
        for line, _ in l2.items():
            assert line not in where
            where[line] = t


def test_rehome_needs_local_homing():
    mem = make_mem(HomingMode.HASHED, pages=2)
    with pytest.raises(UnsupportedModeError):
        mem.rehome([0], 0)


def test_latency_ordering():
    mem = make_mem()
    core = CFG.usable_tiles()[0]
    first = mem.access(core, 0, pid=1)
    again = mem.access(core, 0, pid=1)
    assert first.level == "Dram" and again.l1_hit
    assert again.latency == CFG.lat_l1_hit
    mem.flush_invalidate([core])
    third = mem.access(core, 0, pid=1)
    assert third.level == "L2"
    assert first.latency > third.latency > again.latency


def test_flush_writes_dirty_lines_back():
    mem = make_mem()
    core = CFG.usable_tiles()[3]
    mem.access(core, 5 * LB, True, pid=1, value=42)
    assert mem.flush_invalidate([core]) == 1
    assert mem.l1_of(core).valid_count() == 0 and mem.tlb_of(core).valid_count() == 0
    assert mem.read_through(5 * LB) == 42
