"""Command-line harness: examples, exit codes, determinism and schema."""

import json
import subprocess
import sys

import numpy as np
import pytest

from liebn import io as lio
from liebn.cli import main


def run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(list(argv) + ["--out", str(out)])
    doc = json.loads(out.read_text()) if code == 0 and out.exists() else None
    return code, doc


def test_normalize_euclidean_scalar(tmp_path):
    code, doc = run(["normalize", "--family", "euclidean", "--dim", "1", "--steps", "5"], tmp_path)
    assert code == 0
    lio.validate_report(doc)
    for rec in doc["records"]:
        assert rec["post_mean_distance"] < 1e-12
        v2 = rec["pre_variance"]
        target = v2 / (v2 + doc["config"]["epsilon"])
        assert rec["post_variance"] == pytest.approx(target, rel=1e-12)


def test_normalize_lem_dispersion_ratio(tmp_path):
    code, doc = run(["normalize", "--family", "spd-lem", "--dim", "3", "--scale", "2", "--steps", "3"], tmp_path)
    assert code == 0
    for rec in doc["records"]:
        assert rec["post_variance"] == pytest.approx(rec["expected_post_variance"], rel=1e-7)
        eps = doc["config"]["epsilon"]
        v2 = rec["pre_variance"]
        assert rec["post_variance"] / v2 == pytest.approx(4 * v2 / (v2 + eps) / v2, rel=1e-7)


def test_normalize_aim_mean_control(tmp_path):
    code, doc = run(["normalize", "--family", "spd-aim", "--dim", "3", "--steps", "3"], tmp_path)
    assert code == 0
    assert doc["summary"]["max_post_mean_distance"] < 1e-6


@pytest.mark.parametrize("algo,family,extra", [
    ("mliebn", "so", []),
    ("dsmliebn", "spd-lcm", ["--domains", "2", "--theta", "0.5"]),
])
def test_normalize_variants(algo, family, extra, tmp_path):
    argv = ["normalize", "--family", family, "--dim", "3", "--algo", algo, "--steps", "4", "--spread", "0.3"]
    code, doc = run(argv + extra, tmp_path)
    assert code == 0
    assert len(doc["records"]) == 4


def test_normalize_is_deterministic(tmp_path):
    argv = ["normalize", "--family", "spd-lcm", "--dim", "3", "--steps", "3", "--seed", "5"]
    _, a = run(argv, tmp_path, "a.json")
    _, b = run(argv, tmp_path, "b.json")
    assert lio.dumps_report(lio.strip_timing(a)) == lio.dumps_report(lio.strip_timing(b))


def test_csv_output(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["normalize", "--family", "euclidean", "--dim", "2", "--steps", "2",
                 "--format", "csv", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("step,")
    assert len(lines) == 3


@pytest.mark.parametrize("argv", [
    ["normalize", "--family", "spd-lcm", "--alpha", "2"],
    ["normalize", "--family", "spd-lem", "--scale", "0"],
    ["normalize", "--family", "spd-lem", "--theta", "0"],
    ["normalize", "--family", "spd-lem", "--alpha", "1", "--beta", "-1", "--dim", "2"],
    ["normalize", "--family", "spd-lem", "--batch-size", "0"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "x.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_config_file_overrides_and_bad_types(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 2, "family": ["euclidean"], "dim": [1]}))
    code, doc = run(["normalize", "--steps", "9", "--config", str(cfg)], tmp_path)
    assert code == 0 and len(doc["records"]) == 2
    cfg.write_text(json.dumps({"steps": "many"}))
    assert main(["normalize", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["normalize", "--config", str(cfg)]) == 2


def test_bad_thread_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LIEBN_THREADS", "zero")
    assert main(["verify", "rotation", "--dim", "2", "--out", str(tmp_path / "v.json")]) == 2


def test_sample_concentration(tmp_path):
    mats = tmp_path / "m.txt"
    code, doc = run(["sample", "--family", "spd-lem", "--dim", "3", "--spread", "1e-8",
                     "--batch-size", "200", "--samples", str(mats)], tmp_path)
    assert code == 0
    assert doc["sample"]["checks"]["max_distance"] < 1e-6
    X = lio.read_matrices(mats)
    assert X.shape == (200, 3, 3)


def test_sample_lcm_scaling_law(tmp_path):
    code, doc = run(["sample", "--family", "spd-lcm", "--dim", "2", "--theta", "1.5", "--spread", "0.3",
                     "--scale", "2", "--batch-size", "20000"], tmp_path)
    assert code == 0
    law = doc["sample"]["checks"]["scaling_law"]
    assert law["passed"]
    assert 0.95 * 4 <= law["variance_ratio"] <= 1.05 * 4


def test_sample_so_unsupported(tmp_path, capsys):
    assert main(["sample", "--family", "so", "--dim", "3", "--out", str(tmp_path / "s.json")]) == 2
    assert "UnsupportedBackend" in capsys.readouterr().err


def test_sample_is_deterministic(tmp_path):
    argv = ["sample", "--family", "spd-lem", "--dim", "2", "--batch-size", "500", "--seed", "3"]
    _, a = run(argv, tmp_path, "a.json")
    _, b = run(argv, tmp_path, "b.json")
    assert lio.strip_timing(a) == lio.strip_timing(b)
    assert a["sample"]["rng"] == "philox4x64"


def test_bench_twice(tmp_path):
    argv = ["bench", "--family", "spd-lem", "spd-aim", "--dim", "4", "--steps", "30", "--batch-size", "8"]
    _, a = run(argv, tmp_path, "a.json")
    _, b = run(argv, tmp_path, "b.json")
    assert [r["repetitions"] for r in a["records"]] == [r["repetitions"] for r in b["records"]] == [30, 30]
    assert sorted(a["timing"]["ranking_by_median"]["4"]) == ["spd-aim", "spd-lem"]
    for key in ("spd-lem/4", "spd-aim/4"):
        t = a["timing"][key]
        assert 0 < t["median_s"] <= t["p95_s"]


def test_verify_rotation_passes(tmp_path):
    code, doc = run(["verify", "rotation", "--dim", "2", "3"], tmp_path)
    assert code == 0
    assert doc["summary"]["passed"]
    assert all(r["passed"] for r in doc["records"])


def test_verify_corrupted_tolerance_exits_1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tolerances": {"so_exp_log_pair": 0.0}}))
    code = main(["verify", "rotation", "--dim", "3", "--config", str(cfg), "--out", str(tmp_path / "v.json")])
    assert code == 1
    err = capsys.readouterr().err
    line = next(ln for ln in err.splitlines() if ln.startswith("FAILED so_exp_log_pair"))
    tup = json.loads(line.split(": ", 1)[1])
    assert tup["cell"]["dim"] == 3
    assert np.asarray(tup["failing"]["inputs"]["V"]).shape == (3, 3)


def test_entry_point_subprocess(tmp_path):
    out = tmp_path / "e.json"
    proc = subprocess.run(
        [sys.executable, "-m", "liebn.cli", "normalize", "--family", "euclidean", "--dim", "1",
         "--steps", "2", "--out", str(out)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    lio.validate_report(json.loads(out.read_text()))
