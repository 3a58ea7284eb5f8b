import hashlib
import json
import subprocess
import sys

import pytest

from gazectx import __version__
from gazectx.cli import main


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def synth(path, seed=7, fixations=40, *extra):
    assert main(["synth", "--seed", str(seed), "--objects", "5", "--fixations", str(fixations), "-o", str(path), *extra]) == 0


def test_synth_is_deterministic(work):
    synth(work / "a.jsonl")
    synth(work / "b.jsonl")
    assert (work / "a.jsonl").read_bytes() == (work / "b.jsonl").read_bytes()
    assert (work / "a.truth.json").read_bytes() == (work / "b.truth.json").read_bytes()
    meta = json.loads((work / "a.jsonl.meta.json").read_text())
    assert meta["tool"] == "gazectx" and meta["version"] == __version__
    assert meta["config"]["synth"]["seed"] == 7 and meta["config"]["synth"]["n_fixations"] == 40


def test_synth_flags_reach_the_generator(work):
    synth(work / "s.jsonl", 3, 12, "--size-range", "0.05,0.06", "--rate", "60", "--gaze-error", "2")
    meta = json.loads((work / "s.jsonl.meta.json").read_text())
    assert meta["config"]["synth"]["object_size_range"] == [0.05, 0.06]
    assert meta["config"]["synth"]["sample_rate_hz"] == 60.0
    assert meta["gaze_error_deg"] == 2.0
    header = json.loads((work / "s.jsonl").read_text().splitlines()[0])
    assert header["sample_rate_hz"] == 60.0


def test_validate_clean_and_broken(work, capsys):
    synth(work / "s.jsonl")
    assert main(["validate", str(work / "s.jsonl")]) == 0
    assert capsys.readouterr().out.strip().endswith("0 violations")
    assert json.loads((work / "meta.json").read_text())["inputs"][0]["name"] == "s.jsonl"

    lines = (work / "s.jsonl").read_text().splitlines()
    frame = json.loads(lines[2])
    frame["t_ns"] = 0
    lines[2] = json.dumps(frame)
    (work / "bad.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["validate", str(work / "bad.jsonl"), "--meta", str(work / "v.json")]) == 1
    out = capsys.readouterr().out
    assert "TIME_NOT_INCREASING" in out and "violations" in out


def test_unparseable_file_exits_1(work, capsys):
    (work / "x.jsonl").write_text("not json\n")
    assert main(["fixations", str(work / "x.jsonl")]) == 1
    assert "line 1" in capsys.readouterr().err


def test_usage_errors_exit_2(work, capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2
    synth(work / "s.jsonl", fixations=15)
    assert main(["experiment", "e1", "-i", str(work / "s.jsonl"), "-o", str(work / "o")]) == 2
    assert main(["experiment", "e1", "-i", str(work / "s.jsonl"), "-o", str(work / "o"), "--client", "mock:nope"]) == 2
    assert main(["experiment", "e1", "-i", str(work / "s.jsonl"), "-o", str(work / "o"), "--client", "mock:greedy", "--k", "0..99"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_fixations_csv_and_tolerance_flag(work):
    synth(work / "s.jsonl", fixations=10)
    assert main(["fixations", str(work / "s.jsonl"), "-o", str(work / "f.csv"), "--tolerance", "0.75"]) == 0
    rows = (work / "f.csv").read_text().splitlines()
    assert rows[0] == "start_ns,end_ns,duration_ms,object_id,az_deg,el_deg" and len(rows) == 11
    meta = json.loads((work / "f.csv.meta.json").read_text())
    assert meta["config"]["experiment"]["tolerance_deg"] == 0.75
    assert meta["inputs"][0]["sha256"] == sha(work / "s.jsonl")


def test_sizes_report(work):
    synth(work / "a.jsonl", 1, 12)
    synth(work / "b.jsonl", 2, 12)
    argv = ["sizes", str(work / "a.jsonl"), str(work / "b.jsonl"), "--jobs", "1"]
    assert main(argv + ["-o", str(work / "r.json")]) == 0
    assert main(argv[:-1] + ["2", "-o", str(work / "r2.json")]) == 0
    assert (work / "r.json").read_bytes() == (work / "r2.json").read_bytes()
    rep = json.loads((work / "r.json").read_text())
    assert rep["metrics"]["radius_deg"]["fixated"]["count"] == 24
    assert main(argv + ["--format", "csv", "-o", str(work / "r.csv")]) == 0
    assert (work / "r.csv").read_text().startswith("metric,space,statistic,value\n")
    assert len(json.loads((work / "r.json.meta.json").read_text())["inputs"]) == 2


def test_experiment_contract_and_report(work, capsys):
    synth(work / "s.jsonl")
    capsys.readouterr()
    before = sha(work / "s.jsonl")
    out = work / "out"
    argv = ["experiment", "e1", "--client", "mock:echo-prev", "--k", "0..10", "-i", str(work / "s.jsonl"), "-o", str(out), "--n", "20", "--resamples", "200", "--baselines"]
    assert main(argv) == 0
    assert {p.name for p in out.iterdir()} == {"results.csv", "results.json", "curves.svg", "meta.json"}
    assert sha(work / "s.jsonl") == before
    printed = capsys.readouterr().out
    assert printed == (out / "results.csv").read_text()
    rows = printed.splitlines()
    assert len(rows) == 1 + 5 * 11
    meta = json.loads((out / "meta.json").read_text())
    assert meta["command"] == "experiment e1" and meta["n_trials"] == 20
    assert meta["config"]["experiment"]["resamples"] == 200

    assert main(["report", str(out / "results.json")]) == 0
    assert (out / "report" / "results.csv").read_text() == (out / "results.csv").read_text()
    assert (out / "report" / "curves.svg").read_text() == (out / "curves.svg").read_text()
    assert (out / "report" / "meta.json").exists()


def test_experiment_e2_and_empty_pool(work, capsys):
    synth(work / "s.jsonl", 5, 40, "--interaction-fraction", "0.6")
    assert main(["experiment", "e2", "--client", "mock:greedy", "-i", str(work / "s.jsonl"), "-o", str(work / "o"), "--resamples", "50"]) == 0
    synth(work / "few.jsonl", 5, 9)
    assert main(["experiment", "e1", "--client", "mock:greedy", "-i", str(work / "few.jsonl"), "-o", str(work / "o2")]) == 1
    assert "no eligible" in capsys.readouterr().err


def test_jobs_do_not_change_outputs(work):
    for s in (1, 2):
        synth(work / f"s{s}.jsonl", s, 30)
    base = ["experiment", "e1", "--client", "mock:uniform-random", "--client", "mock:random-prior", "-i", str(work / "s1.jsonl"), "-i", str(work / "s2.jsonl"), "--n", "15", "--resamples", "300"]
    assert main(base + ["-o", str(work / "j1"), "--jobs", "1"]) == 0
    assert main(base + ["-o", str(work / "j4"), "--jobs", "4"]) == 0
    for name in ("results.csv", "results.json", "curves.svg", "meta.json"):
        assert (work / "j1" / name).read_bytes() == (work / "j4" / name).read_bytes()


def test_transport_exhaustion_exits_3(work, monkeypatch, capsys):
    synth(work / "s.jsonl", fixations=15)
    (work / "c.ini").write_text("[client]\nendpoint_url = http://127.0.0.1:9/v1\nretries = 0\ntimeout_s = 2\n")
    monkeypatch.setenv("GAZECTX_API_KEY", "k")
    argv = ["experiment", "e1", "--client", "http", "--config", str(work / "c.ini"), "-i", str(work / "s.jsonl"), "-o", str(work / "o"), "--k", "1"]
    assert main(argv) == 3
    assert "k=1" in capsys.readouterr().err


def test_missing_api_key_is_a_config_error(work, monkeypatch):
    synth(work / "s.jsonl", fixations=15)
    monkeypatch.delenv("GAZECTX_API_KEY", raising=False)
    (work / "c.ini").write_text("[client]\nendpoint_url = http://127.0.0.1:9/v1\n")
    argv = ["experiment", "e1", "--client", "http", "--config", str(work / "c.ini"), "-i", str(work / "s.jsonl"), "-o", str(work / "o")]
    assert main(argv) == 2


def test_config_file_is_echoed(work):
    (work / "run.ini").write_text("[synth]\nn_objects = 3\nn_fixations = 11\n")
    assert main(["synth", "--config", str(work / "run.ini"), "--seed", "2", "-o", str(work / "s.jsonl")]) == 0
    meta = json.loads((work / "s.jsonl.meta.json").read_text())
    assert meta["config"]["synth"]["n_objects"] == 3 and meta["config"]["synth"]["seed"] == 2


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(line.startswith("PASS") for line in out)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gazectx", "bogus"], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2 and "usage" in proc.stderr
