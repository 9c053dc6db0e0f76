import pytest

from conftest import small_app
from tilesec.engine import run
from tilesec.events import EventKind, EventLog, LogParseError, SimEvent
from tilesec.isocheck import RULES, check, inject_fault
from tilesec.machine import split_map
from tilesec.memsim import HomingMode
from tilesec.secmodel import ArchMode


@pytest.fixture(scope="module")
def clean_log(cfg):
    _, log = run(cfg, split_map(cfg, 32), small_app(spec_rate=0.3, fault_rate=0.1), ArchMode.IRONHIDE, 0,
                 target_map=split_map(cfg, 20))
    return log


def test_clean_runs(cfg, clean_log):
    assert check(clean_log).verdict == "clean"
    _, log = run(cfg, split_map(cfg, 32), small_app(spec_rate=0.3), ArchMode.MI6, 0)
    assert check(log).verdict == "clean"


@pytest.mark.parametrize("rule", RULES)
def test_injected_fault_gives_exactly_one_violation(clean_log, rule):
    rep = check(inject_fault(clean_log, rule))
    assert rep.by_rule() == {r: int(r == rule) for r in RULES}


def test_sgx_shares_l2(cfg):
    _, log = run(cfg, split_map(cfg, 32), small_app(reuse=0.3, threads=8, ws_secure=1024, ws_insecure=1024), ArchMode.SGX_LIKE, 0)
    assert check(log).by_rule()["R2"] > 0


def test_hashed_homing_breaks_isolation(cfg):
    _, log = run(cfg, split_map(cfg, 32), small_app(reuse=0.3, threads=8, ws_secure=1024, ws_insecure=1024), ArchMode.IRONHIDE, 0, homing=HomingMode.HASHED)
    assert check(log).by_rule()["R2"] >= 1


def test_unguarded_probe_detected(cfg):
    _, log = run(cfg, split_map(cfg, 32), small_app(spec_rate=1.0), ArchMode.SGX_LIKE, 0)
    assert check(log).verdict == "violated"


def test_report_determinism_and_roundtrip(clean_log, tmp_path):
    path = tmp_path / "log.ndjson"
    bad = inject_fault(clean_log, "R3")
    bad.write(str(path))
    again = EventLog.read(str(path))
    assert check(again).to_json() == check(bad).to_json()
    assert "R3" in check(bad).summary()


def test_log_parse_errors(tmp_path):
    p = tmp_path / "bad.ndjson"
    p.write_text('{"record": "header"}\n{"time": 0, "kind": "Nope", "pid": 1, "cluster": "secure"}\n')
    with pytest.raises(LogParseError) as exc:
        EventLog.read(str(p))
    assert exc.value.line_no == 2


def test_event_roundtrip():
    ev = SimEvent(1.5, EventKind.PACKET_HOP, 2, "secure", path=[[0, 0], [1, 0]], pkt="memory", mc=0)
    assert SimEvent.from_dict(ev.to_dict()) == ev


def test_unknown_rule():
    with pytest.raises(ValueError):
        inject_fault(EventLog(), "R9")
