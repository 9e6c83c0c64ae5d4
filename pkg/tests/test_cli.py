"""End-to-end command-line interface tests (run via subprocess)."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bivsel import (
    DataMatrix,
    Missingness,
    build_scenario_plan,
    generate,
    save_csv,
    save_plan,
    scenario_transforms,
)
from bivsel.sim import DgpSpec

from conftest import toy_logistic


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "bivsel.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def stderr_doc(proc):
    line = proc.stderr.strip().splitlines()[-1]
    return json.loads(line)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# exit codes and error reporting
# ---------------------------------------------------------------------------


def test_version_flag():
    proc = run_cli("--version")
    assert proc.returncode == 0
    assert proc.stdout.strip()


def test_unknown_subcommand_is_usage_error():
    proc = run_cli("frobnicate")
    assert proc.returncode == 2
    doc = stderr_doc(proc)
    assert doc["error"] == "UsageError"
    assert doc["exit_code"] == 2


def test_bad_pi_grid_is_usage_error(tmp_path):
    proc = run_cli(
        "select", "--method", "lasso", "--pi", "1.5",
        "--in", tmp_path / "x.csv", "--out", "sel.json",
        "--outdir", tmp_path,
    )
    assert proc.returncode == 2


def test_absolute_out_is_rejected_before_io(tmp_path):
    proc = run_cli(
        "select", "--method", "lasso",
        "--in", tmp_path / "does_not_exist.csv",
        "--out", "/tmp/escape.json", "--outdir", tmp_path,
    )
    assert proc.returncode == 2
    assert "outdir" in stderr_doc(proc)["message"]


def test_missing_input_file_is_io_error(tmp_path):
    proc = run_cli(
        "impute", "--method", "mice", "--B", "2",
        "--in", tmp_path / "nope.csv", "--outdir", tmp_path / "out",
    )
    assert proc.returncode == 3
    assert stderr_doc(proc)["exit_code"] == 3


def test_unknown_scenario_is_io_error(tmp_path):
    proc = run_cli("simulate", "--scenario", "bogus", "--outdir", tmp_path / "o")
    assert proc.returncode == 3
    assert "bogus" in stderr_doc(proc)["message"]


def test_compute_error_exit_code(tmp_path):
    d = toy_logistic(n=60, k_signal=2, k_noise=2, seed=5)
    data_csv = tmp_path / "d.csv"
    save_csv(d, data_csv)
    proc = run_cli(
        "impute", "--method", "mice", "--B", "0",
        "--in", data_csv, "--outdir", tmp_path / "out",
    )
    assert proc.returncode == 4
    assert stderr_doc(proc)["exit_code"] == 4


# ---------------------------------------------------------------------------
# ampute
# ---------------------------------------------------------------------------


def test_ampute_writes_masked_csv_deterministically(tmp_path):
    d, _ = generate(DgpSpec(n=300, n_noise_cont=2, n_noise_bin=2, seed=21))
    data_csv = tmp_path / "data.csv"
    save_csv(d, data_csv)
    config = tmp_path / "plan.json"
    save_plan(config, build_scenario_plan(Missingness.PCT30), scenario_transforms())

    outs = []
    for sub in ("a", "b"):
        outdir = tmp_path / sub
        proc = run_cli(
            "ampute", "--config", config, "--in", data_csv,
            "--out", "masked.csv", "--outdir", outdir, "--seed", 7,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append((outdir / "masked.csv").read_bytes())
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["command"] == "ampute"
        assert manifest["seed"] == 7
        assert manifest["outputs"] == ["masked.csv"]
    assert outs[0] == outs[1]
    assert b"NA" in outs[0]

    proc = run_cli(
        "ampute", "--config", config, "--in", data_csv,
        "--out", "masked.csv", "--outdir", tmp_path / "c", "--seed", 8,
    )
    assert proc.returncode == 0
    assert (tmp_path / "c" / "masked.csv").read_bytes() != outs[0]


# ---------------------------------------------------------------------------
# select -> metrics pipeline
# ---------------------------------------------------------------------------


def test_select_then_metrics_flow(tmp_path):
    d = toy_logistic(n=250, k_signal=3, k_noise=5, seed=6)
    data_csv = tmp_path / "d.csv"
    save_csv(d, data_csv)

    proc = run_cli(
        "select", "--method", "lasso", "--impute", "none", "--B", 4,
        "--pi", "0.25,0.75", "--in", data_csv,
        "--out", "sel.json", "--outdir", tmp_path / "sel", "--seed", 3,
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads((tmp_path / "sel" / "sel.json").read_text())
    assert doc["method"] == "lasso"
    assert doc["b"] == 4
    assert doc["variables"] == list(d.names)
    assert set(doc["selected"]) == {"0.25", "0.75"}
    assert set(doc["selected"]["0.75"]) <= set(doc["selected"]["0.25"])
    assert len(doc["replicates"]) == 4
    assert all(0.0 <= doc["frequencies"][nm] <= 1.0 for nm in d.names)

    proc = run_cli(
        "metrics", "--in", tmp_path / "sel" / "sel.json",
        "--useful", "v1,v2,v3", "--out", "met.csv",
        "--power-out", "pow.csv", "--label", "demo",
        "--outdir", tmp_path / "met",
    )
    assert proc.returncode == 0, proc.stderr
    rows = read_rows(tmp_path / "met" / "met.csv")
    assert [r["pi"] for r in rows] == ["0.25", "0.75"]
    assert all(r["variant"] == "demo" for r in rows)
    assert all(0.0 <= float(r["f1"]) <= 1.0 for r in rows)
    power = read_rows(tmp_path / "met" / "pow.csv")
    assert len(power) == 2 * 3
    assert {r["variable"] for r in power} == {"v1", "v2", "v3"}


# ---------------------------------------------------------------------------
# simulate / replay
# ---------------------------------------------------------------------------

SIM_FLAGS = (
    "--scenario", "complete", "--n", 120, "--M", 2, "--methods", "lasso",
    "--noise-cont", 3, "--noise-bin", 3, "--seed", 5,
)
SIM_OUTPUTS = ("metrics.csv", "power.csv", "frequencies.csv")


def test_simulate_replay_and_thread_invariance(tmp_path):
    first = tmp_path / "sim1"
    proc = run_cli("simulate", *SIM_FLAGS, "--threads", 1, "--outdir", first)
    assert proc.returncode == 0, proc.stderr
    baseline = {name: (first / name).read_bytes() for name in SIM_OUTPUTS}
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["config"]["M"] == 2
    assert sorted(baseline) == manifest["outputs"]
    rows = read_rows(first / "metrics.csv")
    assert [r["method"] for r in rows] == ["lasso"]
    assert rows[0]["variant"] == "complete"

    replay_dir = tmp_path / "sim2"
    proc = run_cli("replay", first / "manifest.json", "--outdir", replay_dir)
    assert proc.returncode == 0, proc.stderr
    for name in SIM_OUTPUTS:
        assert (replay_dir / name).read_bytes() == baseline[name]

    threaded = tmp_path / "sim3"
    proc = run_cli("simulate", *SIM_FLAGS, "--threads", 2, "--outdir", threaded)
    assert proc.returncode == 0, proc.stderr
    for name in SIM_OUTPUTS:
        assert (threaded / name).read_bytes() == baseline[name]
