import os

import pytest

from conftest import small_app
from tilesec.engine import (AttestationError, InteractiveApp, Phase, Process, ipc_interact, iter_groups,
                            profile_mpki, run, thread_ranges, traffic_sweep)
from tilesec.events import EventKind
from tilesec.heuristic import MpkiTrend, region_points
from tilesec.machine import ConfigurationError, Tag, single_cluster_map, split_map
from tilesec.secmodel import ArchMode

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def test_phase_validation():
    with pytest.raises(ConfigurationError):
        Phase(10, mem_ratio=1.5)
    with pytest.raises(ConfigurationError):
        Process(0, Tag.SECURE, [Phase(10)])


def test_app_marker_count_must_match():
    p = Process(1, Tag.INSECURE, [Phase(10, interactions=3)])
    with pytest.raises(ConfigurationError):
        InteractiveApp(1, [p], 400.0, 4)


def test_iter_groups_splits_at_markers():
    p = Process(1, Tag.INSECURE, [Phase(100, interactions=2, barriers=3), Phase(50, interactions=1)])
    groups = list(iter_groups(p))
    assert len(groups) == 4
    assert sum(instr for g in groups for _, instr, _ in g) == pytest.approx(150)


def test_thread_ranges_partition_hot_set():
    ph = Phase(10, ws_pages=8, hot_fraction=0.25)
    hots = [set(thread_ranges(ph, t, 4, 64)[0]) for t in range(4)]
    assert all(not (a & b) for i, a in enumerate(hots) for b in hots[i + 1:])


@pytest.mark.parametrize("mode", list(ArchMode))
def test_metric_partition_and_ipc_conservation(cfg, mode):
    app = small_app()
    cmap = single_cluster_map(cfg) if mode == ArchMode.INSECURE_BASE else split_map(cfg, 32)
    m, log = run(cfg, cmap, app, mode, 4)
    parts = m.compute_time + m.purge_time + m.entry_exit_time + m.reconfig_time
    assert m.completion_time == pytest.approx(parts, rel=1e-12)
    assert log.count(EventKind.IPC_SEND) == log.count(EventKind.IPC_RECV) == app.interaction_total


def test_mi6_flush_and_purge_accounting(cfg):
    app = small_app(total=9)
    m, log = run(cfg, split_map(cfg, 32), app, ArchMode.MI6, 0)
    assert log.count(EventKind.FLUSH) == 2 * 9
    assert m.purge_events == 9
    assert m.purge_time == 9 * cfg.purge_event_s
    assert m.entry_exit_time == 18 * cfg.entry_exit_s


def test_mi6_purge_linear_in_interactions(cfg):
    times = [run(cfg, split_map(cfg, 32), small_app(total=t), ArchMode.MI6, 0, trace=False)[0].purge_time
             for t in (2, 5, 11)]
    assert times[1] - times[0] == pytest.approx(3 * cfg.purge_event_s, rel=1e-12)
    assert times[2] - times[1] == pytest.approx(6 * cfg.purge_event_s, rel=1e-12)


def test_ironhide_reconfig_once(cfg):
    m, log = run(cfg, split_map(cfg, 32), small_app(), ArchMode.IRONHIDE, 0, target_map=split_map(cfg, 20))
    assert (m.cores_secure, m.cores_insecure) == (20, 44)
    assert m.reconfig_time == cfg.reconfig_s and m.purge_time == 0
    assert log.count(EventKind.RECONFIG) == 1


def test_determinism(cfg):
    a = run(cfg, split_map(cfg, 32), small_app(), ArchMode.IRONHIDE, 7, target_map=split_map(cfg, 28))
    b = run(cfg, split_map(cfg, 32), small_app(), ArchMode.IRONHIDE, 7, target_map=split_map(cfg, 28))
    assert a[0].to_row() == b[0].to_row()
    assert list(a[1].lines()) == list(b[1].lines())


def test_attestation_failure(cfg):
    with pytest.raises(AttestationError):
        run(cfg, split_map(cfg, 32), small_app(), ArchMode.MI6, 0, signature="wrong")


def test_trace_off_matches_trace_on(cfg):
    on = run(cfg, split_map(cfg, 32), small_app(), ArchMode.MI6, 3)[0]
    off = run(cfg, split_map(cfg, 32), small_app(), ArchMode.MI6, 3, trace=False)[0]
    assert on.to_row() == off.to_row()


def test_ipc_interact_directions(cfg):
    app = small_app()
    ev = ipc_interact(cfg, split_map(cfg, 32), app, "to-secure", ArchMode.MI6)
    kinds = [e.kind for e in ev if e.kind in (EventKind.IPC_SEND, EventKind.ENCLAVE_ENTER, EventKind.IPC_RECV)]
    assert kinds == [EventKind.IPC_SEND, EventKind.ENCLAVE_ENTER, EventKind.IPC_RECV]
    with pytest.raises(ValueError):
        ipc_interact(cfg, split_map(cfg, 32), app, "sideways")


def test_profile_capacity_bound_trend(cfg):
    """A working set of eight slices' worth of pages: steep, then linear, then flat."""
    proc = Process(1, Tag.INSECURE, [Phase(1_000_000, ws_pages=2048, hot_fraction=0.1, reuse=0.9)])
    trend = profile_mpki(cfg, proc, [4, 8, 16, 24, 32, 40, 48, 56, 64], seed=0, samples=600)
    with open(os.path.join(GOLDEN, "capacity_trend.csv")) as fh:
        assert trend == MpkiTrend.from_csv(fh.read())
    vals = trend.values
    assert vals[0] == 1.0 and vals[-1] < 0.05
    # conflict misses near full slices leave bumps of about one percent
    assert all(b <= a + 0.02 for a, b in zip(vals, vals[1:]))
    pts = region_points(trend, 64)
    assert pts.point_a < pts.point_b


def test_profile_small_working_set_is_flat(cfg):
    proc = Process(1, Tag.INSECURE, [Phase(1_000_000, ws_pages=8)])
    vals = profile_mpki(cfg, proc, [1, 2, 8, 64], samples=400).values
    assert max(vals[1:]) - min(vals[1:]) <= 0.05


def test_profile_single_count(cfg):
    proc = Process(1, Tag.INSECURE, [Phase(1_000_000, ws_pages=1024)])
    assert profile_mpki(cfg, proc, [1], samples=400).samples == ((1, 1.0),)
    with pytest.raises(ConfigurationError):
        profile_mpki(cfg, proc, [8, 4])


def test_event_times_non_decreasing(cfg):
    for mode, target in ((ArchMode.MI6, None), (ArchMode.IRONHIDE, split_map(cfg, 24))):
        _, log = run(cfg, split_map(cfg, 32), small_app(), mode, 2, target_map=target)
        times = [e.time for e in log.events]
        assert times == sorted(times)


def test_per_transition_purge_pairing(cfg):
    import dataclasses
    per = dataclasses.replace(cfg, purge_pairing="per-transition")
    m = run(per, split_map(cfg, 32), small_app(total=5), ArchMode.MI6, 0, trace=False)[0]
    assert m.purge_events == 10 and m.purge_time == 10 * cfg.purge_event_s


def test_traffic_sweep_covers_pairs(cfg):
    log = traffic_sweep(cfg, split_map(cfg, 32))
    pairs = 32 * 31 * 2
    assert log.count(EventKind.PACKET_HOP) == pairs + 32 * 2 * 2
