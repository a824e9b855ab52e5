import csv
import io
import json
import os

import numpy as np
import pytest

from devbound.cli import EXIT_CERTIFY, EXIT_CONFIG, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_rows(out):
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = next(reader)
    return [dict(zip(header, row)) for row in reader]


def test_width_stdout_value(capsys):
    code, out, _ = run(capsys, "width", "--set", "ball2:r=1,n=50", "--samples", "10000", "--seed", "7")
    assert code == EXIT_OK
    assert out.splitlines()[0].startswith("# devbound width config=")
    row = parse_rows(out)[0]
    assert float(row["mean"]) == pytest.approx(7.035803058166705, rel=0.01)
    assert row["exactness"] == "exact"


def test_bad_set_descriptor_is_config_error(capsys):
    code, _, err = run(capsys, "width", "--set", "blob:r=1", "--samples", "100")
    assert code == EXIT_CONFIG
    assert "config error" in err


def test_zero_trials_rejected(capsys):
    code, _, err = run(capsys, "singvals", "--n", "2", "--m", "9", "--trials", "0")
    assert code == EXIT_CONFIG
    assert "--trials" in err


def test_assert_failure_exit_code(capsys):
    code, _, _ = run(
        capsys, "singvals", "--n", "4", "--m", "64", "--trials", "20",
        "--c-cal", "0.01", "--assert",
    )
    assert code == EXIT_CERTIFY
    code_ok, _, _ = run(
        capsys, "singvals", "--n", "4", "--m", "64", "--trials", "20",
        "--c-cal", "2.0", "--assert",
    )
    assert code_ok == EXIT_OK


def test_failure_without_assert_still_exits_zero(capsys):
    code, _, err = run(
        capsys, "singvals", "--n", "4", "--m", "64", "--trials", "10", "--c-cal", "0.01"
    )
    assert code == EXIT_OK
    assert "certification: fail" in err


def test_calibration_seed_must_differ(capsys):
    code, _, err = run(
        capsys, "tail", "--set", "ball2:r=1,n=6", "--m", "40", "--trials", "40",
        "--calibrate", "40", "--calibrate-seed", "0", "--seed", "0",
    )
    assert code == EXIT_CONFIG
    assert "seed" in err


def test_config_file_merge_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "experiment = width\n"
        "set = ball2:r=1,n=10\n"
        "samples = 500\n"
        "seed = 3\n"
        "# a comment line\n"
    )
    code, out, _ = run(capsys, "width", "--config", str(cfg))
    assert code == EXIT_OK
    assert "n_samples" in out
    assert "seed=3" in out.splitlines()[1]
    # Explicit flags win over file values.
    code2, out2, _ = run(capsys, "width", "--config", str(cfg), "--seed", "9")
    assert code2 == EXIT_OK
    assert "seed=9" in out2.splitlines()[1]


def test_config_file_experiment_mismatch(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("experiment = gamma\nset = ball2:r=1,n=4\n")
    code, _, err = run(capsys, "width", "--config", str(cfg))
    assert code == EXIT_CONFIG
    assert "experiment" in err


def test_thread_count_never_changes_bytes(capsys, tmp_path):
    args = ["deviate", "--set", "sphere:r=1,n=6", "--m", "30", "--trials", "12", "--seed", "5"]
    _, out1, _ = run(capsys, *args, "--threads", "1")
    _, out4, _ = run(capsys, *args, "--threads", "4")
    assert out1 == out4
    env_before = os.environ.get("DEVBOUND_THREADS")
    os.environ["DEVBOUND_THREADS"] = "3"
    try:
        _, out_env, _ = run(capsys, *args)
    finally:
        if env_before is None:
            os.environ.pop("DEVBOUND_THREADS", None)
        else:
            os.environ["DEVBOUND_THREADS"] = env_before
    assert out_env == out1


def test_out_writes_data_summary_and_plot(capsys, tmp_path):
    out = tmp_path / "run.csv"
    code, stdout, _ = run(
        capsys, "width", "--set", "ball2:r=1,n=8", "--samples", "400",
        "--out", str(out), "--plot",
    )
    assert code == EXIT_OK and stdout == ""
    summary = json.loads((tmp_path / "run.summary.json").read_text())
    assert summary["experiment"] == "width"
    png = tmp_path / "run.png"
    assert png.exists() and png.stat().st_size > 0
    assert str(out) in summary["artifacts"] and str(png) in summary["artifacts"]
    assert out.read_text().splitlines()[0].split("config=")[1] == summary["config_hash"]


def test_json_format(capsys):
    code, out, _ = run(
        capsys, "gamma", "--set", "sphere:r=2,n=5", "--samples", "300", "--format", "json"
    )
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["experiment"] == "gamma"
    assert doc["rows"] and "mean" in doc["rows"][0]


def test_config_hash_ignores_runtime_flags(capsys, tmp_path):
    args = ["width", "--set", "ball2:r=1,n=5", "--samples", "300"]
    _, out_a, _ = run(capsys, *args, "--threads", "2")
    _, out_b, _ = run(capsys, *args, "--format", "csv")
    assert out_a.splitlines()[0] == out_b.splitlines()[0]


def test_jl_reads_cloud_csv(capsys, tmp_path):
    cloud = tmp_path / "cloud.csv"
    pts = np.random.default_rng(0).standard_normal((6, 12))
    np.savetxt(cloud, pts, delimiter=",")
    code, out, _ = run(
        capsys, "jl", "--cloud", str(cloud), "--m", "8", "--trials", "5", "--seed", "2"
    )
    assert code == EXIT_OK
    assert len(out.splitlines()) == 3 + 5


def test_escape_grid_syntax(capsys):
    code, out, _ = run(
        capsys, "escape", "--s", "1", "--n", "4", "--m-grid", "2:4",
        "--trials", "10", "--samples", "200",
    )
    assert code == EXIT_OK
    rows = parse_rows(out)
    assert [r["m"] for r in rows] == ["2", "3", "4"]
    assert all(float(r["frequency"]) == 1.0 for r in rows)


def test_select_runs_small(capsys):
    code, out, _ = run(
        capsys, "select", "--set", "l1:r=1,n=6", "--m", "30", "--sigma", "0.1",
        "--lambda", "1,2", "--trials", "4", "--c-cal", "3.0",
        "--gamma-samples", "300",
    )
    assert code == EXIT_OK
    assert "ratio" in out.splitlines()[2]
