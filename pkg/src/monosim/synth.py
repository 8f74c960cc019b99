"""Synthetic Gaussian single-index data with adversarial corruption models,
ground-truth oracles, and the Monte-Carlo probes consumed by the invariant
suites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .core import Activation, Dataset, RegularityParams, truncate_labels
from .gauss import angle, smooth_piecewise_constant, smoothed_derivative_norm
from .spectral import BandPartition, build_band_partition, top_eigenpair
from .util import child_rng, normalize, unit_check


@dataclass(frozen=True)
class ObliviousBounded:
    """Each label independently gets a +-magnitude offset with probability rate."""

    rate: float
    magnitude: float


@dataclass(frozen=True)
class AdversarialBand:
    """Exactly floor(rate * n) labels are pushed to the far side of [-B, B],
    chosen as the samples whose projection is nearest ``center``; targets the
    band statistics where conditioning matters most.  ``direction`` defaults
    to the true index."""

    rate: float
    center: float = 0.0
    direction: np.ndarray | None = None


@dataclass(frozen=True)
class SignFlipTail:
    """Exactly floor(rate * n) sign flips on the largest |w_star . x| samples."""

    rate: float


NoiseModel = Union[ObliviousBounded, AdversarialBand, SignFlipTail, None]


@dataclass
class GroundTruth:
    w_star: np.ndarray
    sigma: Activation
    params: RegularityParams
    noise: NoiseModel = None

    def __post_init__(self):
        self.w_star = unit_check(self.w_star, "w_star")
        rate = getattr(self.noise, "rate", 0.0)
        if not 0.0 <= rate <= 1.0:
            raise ValueError("noise rate must lie in [0, 1]")


def generate(truth: GroundTruth, n: int, d: int, seed: int = 0) -> Dataset:
    """x ~ N(0, I_d) i.i.d., y = sigma(w_star . x) corrupted per the noise
    model, then truncated to [-B, B]."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if d != truth.w_star.size:
        raise ValueError(f"d={d} but w_star has dimension {truth.w_star.size}")
    X = child_rng(seed, "x").standard_normal((n, d))
    clean = np.asarray(truth.sigma.evaluate(X @ truth.w_star), dtype=float)
    y = _corrupt(truth, X, clean, child_rng(seed, "noise"))
    return truncate_labels(Dataset(X, y, validate=False), truth.params.B)


def _corrupt(truth: GroundTruth, X, clean, rng) -> np.ndarray:
    noise = truth.noise
    y = clean.copy()
    n = y.size
    if noise is None:
        return y
    if isinstance(noise, ObliviousBounded):
        mask = rng.random(n) < noise.rate
        y[mask] += noise.magnitude * rng.choice([-1.0, 1.0], size=int(mask.sum()))
        return y
    k = int(math.floor(noise.rate * n))
    if k == 0:
        return y
    if isinstance(noise, AdversarialBand):
        direction = truth.w_star if noise.direction is None else normalize(noise.direction)
        proj = X @ direction
        idx = np.argsort(np.abs(proj - noise.center), kind="stable")[:k]
        y[idx] = np.where(clean[idx] >= 0.0, -truth.params.B, truth.params.B)
        return y
    if isinstance(noise, SignFlipTail):
        proj = X @ truth.w_star
        idx = np.argsort(-np.abs(proj), kind="stable")[:k]
        y[idx] = -y[idx]
        return y
    raise TypeError(f"unknown noise model {noise!r}")


def estimate_opt(truth: GroundTruth, data: Dataset) -> float:
    """Empirical loss of the ground-truth predictor on the given data; an
    upper bound on the best-in-class loss, used as the reference in
    constant-factor checks."""
    ref = np.clip(
        np.asarray(truth.sigma.evaluate(data.X @ truth.w_star), dtype=float),
        -truth.params.B,
        truth.params.B,
    )
    resid = data.y - ref
    return float(np.mean(resid * resid))


# ---------------------------------------------------------------------------
# population probes


@dataclass
class QuadFormEstimate:
    value: float
    se: float


@dataclass
class ProbeRecord:
    theta: float
    sin_theta: float
    smoothed_norm: float
    opt_est: float
    v_quadform: QuadFormEstimate
    orthogonal_quadforms: list[QuadFormEstimate]
    top_eigval: float
    eigengap: float
    eigengap_se: float
    eig_corr: float
    grad_corr: QuadFormEstimate
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "sin_theta": self.sin_theta,
            "smoothed_norm": self.smoothed_norm,
            "opt_est": self.opt_est,
            "v_quadform": [self.v_quadform.value, self.v_quadform.se],
            "orthogonal_quadforms": [[q.value, q.se] for q in self.orthogonal_quadforms],
            "top_eigval": self.top_eigval,
            "eigengap": self.eigengap,
            "eigengap_se": self.eigengap_se,
            "eig_corr": self.eig_corr,
            "grad_corr": [self.grad_corr.value, self.grad_corr.se],
            "n_samples": self.n_samples,
        }


def _split_quadform(t_a, j_a, t_b, j_b, probs, n_a, n_b) -> QuadFormEstimate:
    """Unbiased estimate of sum_j E[t 1{band j}]^2 / p_j from two independent
    halves, with a delta-method standard error.

    ``n_a`` and ``n_b`` are the full half sizes (the banded means average the
    indicator over every sample, including those outside the grid).  The
    plug-in quadratic form of the empirical matrix is biased upward by the
    per-band sampling variance; the split product removes that bias.
    """
    n_bands = probs.size
    mean_a = np.bincount(j_a, weights=t_a, minlength=n_bands) / n_a
    mean_b = np.bincount(j_b, weights=t_b, minlength=n_bands) / n_b
    sq_a = np.bincount(j_a, weights=t_a * t_a, minlength=n_bands) / n_a
    sq_b = np.bincount(j_b, weights=t_b * t_b, minlength=n_bands) / n_b
    var_a = np.maximum(sq_a - mean_a**2, 0.0) / n_a
    var_b = np.maximum(sq_b - mean_b**2, 0.0) / n_b
    value = float(np.sum(mean_a * mean_b / probs))
    var = np.sum(
        (mean_b**2 * var_a + mean_a**2 * var_b + var_a * var_b) / probs**2
    )
    return QuadFormEstimate(value=value, se=float(math.sqrt(var)))


def smoothed_derivative_at(truth: GroundTruth, rho: float):
    """T_rho sigma' as a fast callable; closed form for piecewise-constant
    derivatives, which covers every catalog activation used by the probes."""
    steps = truth.sigma.derivative_steps()
    if steps is None or not steps[0].size:
        from .gauss import ou_smooth

        breaks = getattr(truth.sigma, "breaks", ())
        return lambda x: ou_smooth(truth.sigma.derivative, rho, x, breaks=breaks)
    return smooth_piecewise_constant(steps[0], steps[1], rho)


def population_probe(
    truth: GroundTruth,
    w: np.ndarray,
    mc_budget: int = 10**5,
    seed: int = 0,
    partition: BandPartition | None = None,
    n_orthogonal: int = 20,
    n_shards: int = 10,
) -> ProbeRecord:
    """Monte-Carlo estimates of the spectral quantities at direction w:
    the quadratic form along the ideal update direction, quadratic forms
    along random orthogonal directions, the top-eigenvector correlation and
    eigengap of the assembled matrix, and the smoothed-gradient correlation."""
    if mc_budget < 10**4:
        raise ValueError("mc_budget too small for stable probes")
    w = unit_check(w, "w")
    w_star = truth.w_star
    if partition is None:
        partition = build_band_partition(truth.params)
    theta = angle(w, w_star)
    v_star = normalize(w_star - (w @ w_star) * w)
    rho = math.cos(theta)
    data = generate(truth, mc_budget, w.size, seed=seed)
    X, y = data.X, data.y
    n = data.n

    z = X @ w
    jdx = partition.band_index(z)
    inside = jdx >= 0
    ji = jdx[inside]

    def projected(u):
        # y * (u . x_perp) = y * (u.x - (w.x)(u.w)); u is orthogonal to w here
        return (y * (X @ u))[inside]

    half = n // 2
    sel_a = np.zeros(n, dtype=bool)
    sel_a[:half] = True
    ia, ib = sel_a[inside], ~sel_a[inside]
    n_a, n_b = half, n - half

    t_v = projected(v_star)
    v_quad = _split_quadform(
        t_v[ia], ji[ia], t_v[ib], ji[ib], partition.band_probs, n_a, n_b
    )

    rng = child_rng(seed, "orthogonal")
    orth_quads = []
    basis = [w, v_star]
    for _ in range(n_orthogonal):
        u = rng.standard_normal(w.size)
        for bvec in basis:
            u -= (bvec @ u) * bvec
        u = normalize(u)
        t_u = projected(u)
        orth_quads.append(
            _split_quadform(
                t_u[ia], ji[ia], t_u[ib], ji[ib], partition.band_probs, n_a, n_b
            )
        )

    # assembled matrix on the full budget, plus a jackknife SE for the gap
    n_bands, d = partition.n_bands, w.size
    shard = np.minimum((np.arange(n) * n_shards) // n, n_shards - 1)
    shard_in = shard[inside]
    A_sh = np.zeros((n_shards, n_bands, d))
    bw_sh = np.zeros((n_shards, n_bands))
    Xi, yi, zi = X[inside], y[inside], z[inside]
    for s in range(n_shards):
        m = shard_in == s
        jm = ji[m]
        bw_sh[s] = np.bincount(jm, weights=yi[m] * zi[m], minlength=n_bands)
        yx = yi[m, None] * Xi[m]
        for k in range(d):
            A_sh[s, :, k] = np.bincount(jm, weights=yx[:, k], minlength=n_bands)

    def gap_of(A, bw, count):
        G = (A - np.outer(bw, w)) / count
        Gs = G / np.sqrt(partition.band_probs)[:, None]
        m = Gs.T @ Gs
        m = 0.5 * (m + m.T)
        pair = top_eigenpair(m, w, seed=seed)
        return pair, m

    A_tot, bw_tot = A_sh.sum(axis=0), bw_sh.sum(axis=0)
    pair, _ = gap_of(A_tot, bw_tot, n)
    gaps = []
    shard_counts = np.bincount(shard, minlength=n_shards)
    for s in range(n_shards):
        p_s, _ = gap_of(A_tot - A_sh[s], bw_tot - bw_sh[s], n - shard_counts[s])
        gaps.append(p_s.value - p_s.second_value)
    gaps = np.asarray(gaps)
    gap_se = math.sqrt(
        max((n_shards - 1) / n_shards * np.sum((gaps - gaps.mean()) ** 2), 0.0)
    )

    smoothed = smoothed_derivative_at(truth, rho)
    corr_terms = y * smoothed(z) * (X @ v_star) * math.sin(theta)
    grad_corr = QuadFormEstimate(
        value=float(corr_terms.mean()), se=float(corr_terms.std() / math.sqrt(n))
    )

    return ProbeRecord(
        theta=theta,
        sin_theta=math.sin(theta),
        smoothed_norm=smoothed_derivative_norm(truth.sigma, rho),
        opt_est=estimate_opt(truth, data),
        v_quadform=v_quad,
        orthogonal_quadforms=orth_quads,
        top_eigval=pair.value,
        eigengap=pair.value - pair.second_value,
        eigengap_se=gap_se,
        eig_corr=float(abs(pair.vector @ v_star)),
        grad_corr=grad_corr,
        n_samples=n,
    )
