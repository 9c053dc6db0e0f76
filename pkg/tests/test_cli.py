import json

from tilesec.cli import main
from tilesec.heuristic import normalize_trend
from tilesec.machine import default_config, split_map
from tilesec.workload import corpus_dir

from test_workload import tiny_workload


def test_run_check_report(tmp_path, capsys):
    path = tiny_workload(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--workload", path, "--mode", "mi6,ironhide", "--seed", "2", "--out", str(out)]) == 0
    assert main(["check", str(out / "logs" / "tiny-mi6-2.ndjson")]) == 0
    assert main(["report", str(out / "metrics.csv"), "--out", str(tmp_path / "cmp.csv")]) == 0
    assert "purge component ratio" in capsys.readouterr().out


def test_hashed_homing_exit_code(tmp_path):
    path = tiny_workload(tmp_path)
    rc = main(["run", "--workload", path, "--mode", "sgx", "--seed", "1", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_validation_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x"}')
    assert main(["run", "--workload", str(bad), "--mode", "mi6", "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_alloc(tmp_path, capsys):
    s = tmp_path / "s.csv"
    i = tmp_path / "i.csv"
    s.write_text(normalize_trend([(4, 10), (32, 4), (40, 2), (64, 2)]).to_csv())
    i.write_text(normalize_trend([(4, 10), (16, 3), (36, 1), (64, 1)]).to_csv())
    assert main(["alloc", str(s), str(i)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["cores_secure"] + d["cores_insecure"] == 64
    assert main(["alloc", str(s), str(i), "--oracle"]) == 0
    assert json.loads(capsys.readouterr().out)["branch"] == "oracle"


def test_check_map(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps(split_map(default_config(), 20).to_dict()))
    assert main(["check", "--map", str(m)]) == 0
    assert json.loads(capsys.readouterr().out)["routable"] is True


def test_sweep(tmp_path):
    path = tiny_workload(tmp_path)
    assert main(["sweep", "--workload", path, "--cores", "8,64", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "tiny.pid1.csv").read_text().startswith("cores,mpki")


def test_corpus_dir_exists():
    import os
    assert os.path.isdir(corpus_dir())
