import json
import math
import os

import numpy as np
import pytest

from monosim.cli import main
from monosim.core import Dataset, Hypothesis


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


def test_generate_learn_evaluate_roundtrip(tmp_path, capsys):
    data_path = tmp_path / "toy.dat"
    hyp_path = tmp_path / "hyp.json"
    report_path = tmp_path / "report.jsonl"
    code, out = run_cli(
        capsys,
        [
            "generate",
            "--model", "identity",
            "--d", "5",
            "--n", "20000",
            "--B", "3", "--L", "1", "--eps", "0.25",
            "--seed", "3",
            "--out", str(data_path),
        ],
    )
    assert code == 0
    truth_path = out[0]["truth"]
    assert os.path.exists(truth_path)

    code, out = run_cli(
        capsys,
        [
            "learn",
            "--data", str(data_path),
            "--eps", "0.25", "--B", "3", "--L", "1",
            "--seed", "7",
            "--out", str(hyp_path),
            "--report", str(report_path),
            "--truth", truth_path,
        ],
    )
    assert code == 0
    assert out[0]["holdout_loss"] <= 0.1
    assert out[0]["angle_to_truth"] <= 0.5
    report = json.loads(report_path.read_text())
    assert report["holdout_loss"] == out[0]["holdout_loss"]

    hyp = Hypothesis.load(hyp_path)
    assert abs(np.linalg.norm(hyp.w) - 1.0) <= 1e-12

    code, out = run_cli(
        capsys, ["evaluate", "--data", str(data_path), "--hyp", str(hyp_path)]
    )
    assert code == 0
    assert out[0]["loss"] >= 0.0
    assert out[0]["dim"] == 5


def test_generate_binary_and_noise(tmp_path, capsys):
    path = tmp_path / "noisy.bin"
    code, out = run_cli(
        capsys,
        [
            "generate",
            "--model", "relu", "--bias", "0.5",
            "--d", "4", "--n", "500",
            "--B", "5", "--L", "1", "--eps", "0.1",
            "--noise", "oblivious", "--rate", "0.1", "--magnitude", "1.0",
            "--seed", "1",
            "--out", str(path),
            "--binary",
        ],
    )
    assert code == 0
    data = Dataset.load(path)
    assert data.n == 500 and data.dim == 4
    truth = json.loads(open(out[0]["truth"]).read())
    assert truth["noise"]["kind"] == "oblivious"


def test_learn_trace_output(tmp_path, capsys):
    data_path = tmp_path / "toy.dat"
    run_cli(
        capsys,
        ["generate", "--model", "identity", "--d", "4", "--n", "8000",
         "--B", "2", "--L", "1", "--eps", "0.4", "--seed", "2", "--out", str(data_path)],
    )
    trace_path = tmp_path / "trace.jsonl"
    code, out = run_cli(
        capsys,
        ["learn", "--data", str(data_path), "--eps", "0.4", "--B", "2", "--L", "1",
         "--seed", "5", "--out", str(tmp_path / "h.json"), "--trace", str(trace_path),
         "--T", "3", "--K", "1"],
    )
    assert code == 0
    lines = [json.loads(l) for l in trace_path.read_text().splitlines()]
    assert lines and {"t", "phi", "eta", "sign", "top_eigval"} <= set(lines[0])


def test_sim_seed_env_fallback(tmp_path, capsys, monkeypatch):
    path_a = tmp_path / "a.dat"
    path_b = tmp_path / "b.dat"
    monkeypatch.setenv("SIM_SEED", "42")
    run_cli(capsys, ["generate", "--model", "identity", "--d", "3", "--n", "50",
                     "--B", "2", "--L", "1", "--eps", "0.4", "--out", str(path_a)])
    run_cli(capsys, ["generate", "--model", "identity", "--d", "3", "--n", "50",
                     "--B", "2", "--L", "1", "--eps", "0.4", "--seed", "42",
                     "--out", str(path_b)])
    assert Dataset.load(path_a) == Dataset.load(path_b)


def test_config_file_defaults(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("eps = 0.4\nB = 2\nL = 1\nseed = 11\n")
    data_path = tmp_path / "c.dat"
    run_cli(capsys, ["generate", "--model", "identity", "--d", "3", "--n", "6000",
                     "--B", "2", "--L", "1", "--eps", "0.4", "--seed", "0",
                     "--out", str(data_path)])
    code, out = run_cli(
        capsys,
        ["learn", "--data", str(data_path), "--out", str(tmp_path / "h.json"),
         "--config", str(cfg), "--T", "2", "--K", "1"],
    )
    assert code == 0


def test_unknown_flag_usage_error(capsys):
    code = main(["learn", "--bogus"])
    assert code != 0


def test_bench_smoke(capsys):
    code, out = run_cli(
        capsys,
        ["bench", "--d", "4", "--n", "2000", "--eps", "0.5", "--iters", "1",
         "--kernels", "both", "--seed", "0"],
    )
    assert code == 0
    kernels_seen = {rec["kernel"] for rec in out}
    assert kernels_seen == {"numba", "numpy"}
    ops = {rec["op"] for rec in out}
    assert {"band_statistics", "iso_solve", "halfspace_refine"} <= ops


def test_probe_invariants_semigroup(capsys):
    code, out = run_cli(capsys, ["probe-invariants", "--suite", "semigroup"])
    assert code == 0
    assert all(rec["pass"] for rec in out)
    names = {rec["probe"] for rec in out}
    assert "composition_t06_s05_polys_deg_le_6" in names
