import json
import math

import numpy as np
import pytest

from monosim.core import (
    Dataset,
    GeneralReLU,
    PiecewiseLinearMonotone,
    RegularityParams,
)
from monosim.gauss import angle, smoothed_derivative_norm
from monosim.pipeline import (
    CandidatePool,
    PipelineConfig,
    build_theta_grid,
    run_pipeline,
    run_with_repeats,
)
from monosim.synth import GroundTruth, generate
from monosim.util import normalize


def _small_truth(d=6, seed=0):
    w_star = normalize(np.random.default_rng(seed).standard_normal(d))
    sigma = PiecewiseLinearMonotone([-3.0, 3.0], [-3.0, 3.0])
    params = RegularityParams(B=3.0, L=1.0, eps=0.25)
    return GroundTruth(w_star=w_star, sigma=sigma, params=params)


def test_theta_grid_full_coverage():
    # full grid: every true angle has a grid point within eps/L above it
    params = RegularityParams(B=1.0, L=1.0, eps=0.05)
    grid = build_theta_grid(params, cap=10**9)
    step = params.eps / params.L
    rng = np.random.default_rng(0)
    for theta0 in rng.uniform(1e-6, math.pi / 2 - step, size=200):
        above = grid[grid >= theta0]
        assert above.size and above.min() <= theta0 + step + 1e-12
    assert np.all(grid > 0) and np.all(grid <= math.pi / 2 + 1e-12)


def test_theta_grid_cap_and_faithful():
    params = RegularityParams(B=1.0, L=1.0, eps=0.01)
    grid = build_theta_grid(params, cap=8)
    assert len(grid) <= 8
    assert grid[0] == pytest.approx(0.01)  # refined near small angles
    full = build_theta_grid(params, cap=8, paper_faithful=True)
    assert len(full) == math.ceil((math.pi / 2) / 0.01)


def test_candidate_pool_dedup():
    pool = CandidatePool()
    w = normalize(np.array([1.0, 2.0, 3.0]))
    assert pool.add(w)
    assert not pool.add(w.copy())
    assert not pool.add(w + 1e-12)
    assert pool.add(normalize(np.array([3.0, 2.0, 1.0])))
    assert len(pool) == 2


def test_pipeline_constant_labels():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4000, 4))
    data = Dataset(X, np.full(4000, 2.0))
    params = RegularityParams(B=3.0, L=1.0, eps=0.3)
    hyp, report = run_pipeline(data, PipelineConfig(params=params, seed=0))
    assert report["selected"]["candidate"] == "constant"
    assert report["holdout_loss"] == pytest.approx(0.0, abs=1e-12)
    assert hyp.u.evaluate(0.3) == pytest.approx(2.0)


def test_pipeline_zero_labels_falls_back_to_constant():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((4000, 3))
    data = Dataset(X, np.zeros(4000))
    params = RegularityParams(B=1.0, L=1.0, eps=0.3)
    hyp, report = run_pipeline(data, PipelineConfig(params=params, seed=0))
    assert report["initializer_candidates"] == 0
    assert any("uninformative" in w for w in report["warnings"])
    assert report["holdout_loss"] == pytest.approx(0.0, abs=1e-12)


def test_pipeline_linear_model_small():
    truth = _small_truth()
    data = generate(truth, 30000, 6, seed=3)
    config = PipelineConfig(params=truth.params, seed=3)
    hyp, report = run_pipeline(data, config, truth=truth)
    assert report["holdout_loss"] <= 0.05
    assert report["angle_to_truth"] <= 0.2
    assert report["opt_estimate"] <= 1e-12
    # report is JSON-serializable
    json.dumps(report)


def test_pipeline_deterministic():
    truth = _small_truth(seed=4)
    data = generate(truth, 20000, 6, seed=4)
    config = PipelineConfig(params=truth.params, seed=9)
    hyp1, rep1 = run_pipeline(data, config)
    hyp2, rep2 = run_pipeline(data, config)
    assert np.array_equal(hyp1.w, hyp2.w)
    assert np.array_equal(hyp1.u.values, hyp2.u.values)
    assert rep1["holdout_loss"] == rep2["holdout_loss"]


def test_pipeline_sample_budget_and_splits():
    truth = _small_truth(seed=5)
    data = generate(truth, 20000, 6, seed=5)
    config = PipelineConfig(params=truth.params, seed=1, n_samples=8000)
    hyp, report = run_pipeline(data, config)
    assert report["n_used"] == 8000
    assert sum(report["split_sizes"][i] for i in (0, 2, 3)) <= 8000
    assert len(report["split_sizes"]) == 4


def test_pipeline_no_fresh_split_reuses_everything():
    truth = _small_truth(seed=6)
    data = generate(truth, 8000, 6, seed=6)
    config = PipelineConfig(params=truth.params, seed=1, fresh_split=False)
    hyp, report = run_pipeline(data, config)
    assert report["split_sizes"][0] == 8000
    assert report["split_sizes"][2] == 8000


def test_pipeline_needs_enough_samples():
    data = Dataset(np.random.default_rng(0).standard_normal((8, 5)), np.zeros(8))
    params = RegularityParams(B=1.0, L=1.0, eps=0.5)
    with pytest.raises(ValueError):
        run_pipeline(data, PipelineConfig(params=params))


def test_run_with_repeats_keeps_best():
    truth = _small_truth(seed=7)
    data = generate(truth, 16000, 6, seed=7)
    config = PipelineConfig(params=truth.params, seed=2)
    hyp, report = run_with_repeats(data, config, repeats=2, truth=truth)
    assert "repeat" in report
    _, single = run_pipeline(data, config, truth=truth)
    assert report["holdout_loss"] <= single["holdout_loss"] + 1e-15


def test_claim_317_probe():
    # an index within eps/L of the truth already has near-optimal loss
    rng = np.random.default_rng(8)
    d = 6
    w_star = normalize(rng.standard_normal(d))
    sigma = PiecewiseLinearMonotone([-3.0, 3.0], [-3.0, 3.0])
    params = RegularityParams(B=3.0, L=1.0, eps=0.05)
    truth = GroundTruth(w_star=w_star, sigma=sigma, params=params)
    data = generate(truth, 10**5, d, seed=8)
    theta0 = params.eps / params.L
    u = normalize(rng.standard_normal(d) - (rng.standard_normal(d) @ w_star) * w_star)
    u = normalize(u - (u @ w_star) * w_star)
    w = math.cos(theta0) * w_star + math.sin(theta0) * u
    pred = sigma.evaluate(data.X @ w)
    loss = float(np.mean((pred - data.y) ** 2))
    opt = 0.0  # clean data
    assert loss <= 2 * opt + 10 * params.eps


def test_fact_210_probe():
    # loss at a nearby direction is controlled by OPT + sin^2 * smoothed norm^2
    rng = np.random.default_rng(9)
    d = 6
    w_star = normalize(rng.standard_normal(d))
    sigma = GeneralReLU(bias=0.0)
    params = RegularityParams(B=3.0, L=1.0, eps=0.1)
    truth = GroundTruth(w_star=w_star, sigma=sigma, params=params)
    data = generate(truth, 2 * 10**5, d, seed=9)
    theta = 0.25  # below 1/M for the truncated support scale
    u = normalize(rng.standard_normal(d) - (rng.standard_normal(d) @ w_star) * w_star)
    u = normalize(u - (u @ w_star) * w_star)
    w = math.cos(theta) * w_star + math.sin(theta) * u
    pred = np.clip(sigma.evaluate(data.X @ w), -params.B, params.B)
    loss = float(np.mean((pred - data.y) ** 2))
    norm = smoothed_derivative_norm(sigma, math.cos(theta))
    bound = 5.0 * (0.0 + math.sin(theta) ** 2 * norm**2) + 3.0 / math.sqrt(data.n)
    assert loss <= bound


def test_config_roundtrip():
    params = RegularityParams(B=2.0, L=1.0, eps=0.1)
    cfg = PipelineConfig(params=params, seed=4)
    d = cfg.to_dict()
    json.dumps(d)
    assert d["B"] == 2.0 and d["seed"] == 4 and d["T"] >= 1 and d["K"] >= 1
