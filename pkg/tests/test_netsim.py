import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilesec.machine import ConfigurationError, MeshCoord, Tag, default_config, make_map, row_block_map, split_map
from tilesec.netsim import (PacketKind, RoutePolicy, UncontainableError, choose_policy, route,
                            verify_containment)

CFG = default_config()
coords = st.builds(MeshCoord, st.integers(0, 8), st.integers(0, 7))


def test_route_examples():
    assert route((0, 0), (2, 1), RoutePolicy.XY) == [(0, 0), (1, 0), (2, 0), (2, 1)]
    assert route((0, 0), (2, 1), RoutePolicy.YX) == [(0, 0), (0, 1), (1, 1), (2, 1)]
    assert route((3, 3), (3, 3)) == [(3, 3)]


def test_route_rejects_off_grid():
    with pytest.raises(ConfigurationError):
        route((0, 0), (9, 0), grid=(9, 8))


@settings(max_examples=300, deadline=None)
@given(coords, coords, st.sampled_from(list(RoutePolicy)))
def test_route_is_minimal_unit_steps(src, dst, pol):
    p = route(src, dst, pol, grid=(9, 8))
    assert p[0] == src and p[-1] == dst
    assert len(p) - 1 == abs(src.x - dst.x) + abs(src.y - dst.y)
    for a, b in zip(p, p[1:]):
        assert abs(a.x - b.x) + abs(a.y - b.y) == 1


@settings(max_examples=300, deadline=None)
@given(coords, coords)
def test_xy_reverse_is_yx(src, dst):
    assert route(src, dst, RoutePolicy.XY) == list(reversed(route(dst, src, RoutePolicy.YX)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 63), st.data())
def test_choose_policy_contained_and_deterministic(k, data):
    m = split_map(CFG, k)
    for tag in (Tag.SECURE, Tag.INSECURE):
        tiles = m.tiles_of(tag)
        s = m.coord(data.draw(st.sampled_from(tiles)))
        d = m.coord(data.draw(st.sampled_from(tiles)))
        pol = choose_policy(m, s, d, PacketKind.COHERENCE)
        assert pol == choose_policy(m, s, d, PacketKind.COHERENCE)
        assert all(m.tag_at(c) == tag for c in route(s, d, pol))


def test_ipc_always_xy():
    m = split_map(CFG, 32)
    assert choose_policy(m, (0, 0), (7, 7), PacketKind.IPC) == RoutePolicy.XY


def test_cross_cluster_coherence_rejected():
    m = split_map(CFG, 32)
    with pytest.raises(UncontainableError):
        choose_policy(m, (0, 0), (7, 7), PacketKind.COHERENCE)


@pytest.mark.parametrize("k", range(1, 64))
def test_every_row_major_split_is_contained(k):
    assert verify_containment(split_map(CFG, k)).ok


def test_row_blocks_contained():
    for r in range(1, 8):
        assert verify_containment(row_block_map(CFG, range(r))).ok


def test_checkerboard_is_uncontainable():
    usable = set(CFG.usable_tiles())
    tags = [Tag.UNUSED] * CFG.n_tiles
    for t in usable:
        c = CFG.coord(t)
        tags[t] = Tag.SECURE if (c.x + c.y) % 2 == 0 else Tag.INSECURE
    m = make_map(CFG, tags, [Tag.SECURE, Tag.SECURE, Tag.INSECURE, Tag.INSECURE])
    rep = verify_containment(m)
    assert not rep.ok and rep.pairs_checked > 0
    assert rep.to_dict()["routable"] is False
