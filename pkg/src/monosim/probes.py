"""Invariant probe suites: smoothing-operator residuals and the spectral
structure checks, shared by the tests and the probe-invariants CLI."""

from __future__ import annotations

import math

import numpy as np

from .core import PiecewiseLinearMonotone, RegularityParams
from .gauss import (
    CATALOG,
    check_semigroup_identities,
    check_smoothing_error,
    gaussian_expectation,
    l2_norm,
    ou_smooth,
)
from .spectral import build_band_partition
from .synth import GroundTruth, ObliviousBounded, population_probe
from .util import child_rng, normalize


def run_semigroup_suite() -> list[dict]:
    """Composition, nonexpansiveness, monotonicity in rho, symmetry, and the
    smoothing-error bound, each evaluated by quadrature over the catalog."""
    out = []

    polys = [f for f in CATALOG if f.degree is not None and f.degree <= 6]
    worst = 0.0
    for f in polys:
        rep = check_semigroup_identities(f.f, 0.6, 0.5, breaks=f.breaks)
        worst = max(worst, rep.composition_residual)
    out.append(
        {
            "probe": "composition_t06_s05_polys_deg_le_6",
            "pass": bool(worst <= 1e-8),
            "residual": worst,
            "tolerance": 1e-8,
        }
    )

    worst_ratio = 0.0
    for f in CATALOG:
        for rho in (0.3, 0.7, 0.95):
            nf = l2_norm(f.f, f.breaks)
            ns = l2_norm(lambda x: ou_smooth(f.f, rho, x, breaks=f.breaks))
            if nf > 0:
                worst_ratio = max(worst_ratio, ns / nf)
    out.append(
        {
            "probe": "nonexpansive_all_catalog",
            "pass": bool(worst_ratio <= 1.0 + 1e-6),
            "worst_ratio": worst_ratio,
            "tolerance": 1e-6,
        }
    )

    mono_ok = True
    worst_drop = 0.0
    grid = np.arange(0.1, 0.95, 0.1)
    for f in CATALOG:
        norms = [
            l2_norm(lambda x: ou_smooth(f.f, rho, x, breaks=f.breaks)) for rho in grid
        ]
        drops = np.diff(norms)
        worst_drop = min(worst_drop, float(drops.min(initial=0.0)))
        if np.any(drops < -1e-9):
            mono_ok = False
    out.append(
        {
            "probe": "norm_monotone_in_rho",
            "pass": bool(mono_ok),
            "worst_drop": worst_drop,
            "tolerance": 1e-9,
        }
    )

    pairs = [("relu", "threshold"), ("tanh", "poly2"), ("identity", "smooth_ramp")]
    by_name = {f.name: f for f in CATALOG}
    worst_sym = 0.0
    for a, b in pairs:
        fa, fb = by_name[a], by_name[b]
        t = 0.7
        lhs = gaussian_expectation(
            lambda z: ou_smooth(fa.f, t, z, breaks=fa.breaks) * fb.f(z), breaks=fb.breaks
        )
        rhs = gaussian_expectation(
            lambda z: ou_smooth(fb.f, t, z, breaks=fb.breaks) * fa.f(z), breaks=fa.breaks
        )
        worst_sym = max(worst_sym, abs(lhs - rhs))
    out.append(
        {
            "probe": "smoothing_symmetry_pairs",
            "pass": bool(worst_sym <= 1e-8),
            "residual": worst_sym,
            "tolerance": 1e-8,
        }
    )

    bound_ok = True
    details = []
    for f in CATALOG:
        if not f.continuous:
            continue  # the gradient bound requires continuity
        for rho in (0.5, 0.9, 0.99):
            lhs, rhs = check_smoothing_error(f.f, f.fprime, rho, breaks=f.breaks)
            details.append([f.name, rho, lhs, rhs])
            if lhs > rhs + 1e-9:
                bound_ok = False
    out.append(
        {
            "probe": "smoothing_error_bound_rho_05_09_099",
            "pass": bool(bound_ok),
            "cases": len(details),
        }
    )
    return out


def spectral_probe_model(d: int = 5, seed: int = 0):
    """The arranged model for the spectral lemma probes: a capped 16x ramp
    (the unit-norm convention folds scale into the activation) at 30 degrees
    and independent bounded corruption with second moment 0.01."""
    w_star = normalize(child_rng(seed, "wstar").standard_normal(d))
    sigma = PiecewiseLinearMonotone([-6.0, 0.0, 6.0], [0.0, 0.0, 96.0])
    params = RegularityParams(B=97.0, L=16.0 / math.sqrt(2.0), eps=0.35)
    truth = GroundTruth(
        w_star=w_star, sigma=sigma, params=params, noise=ObliviousBounded(0.04, 0.5)
    )
    theta = math.pi / 6
    seed_dir = np.zeros(d)
    seed_dir[0] = 1.0
    if abs(seed_dir @ w_star) > 0.99:
        seed_dir = np.zeros(d)
        seed_dir[1] = 1.0
    u = normalize(seed_dir - (seed_dir @ w_star) * w_star)
    w = math.cos(theta) * w_star + math.sin(theta) * u
    opt_target = 0.04 * 0.5**2
    return truth, w, opt_target


def run_spectral_suite(mc_budget: int = 10**6, seed: int = 0) -> list[dict]:
    """Alignment, orthogonal-smallness, eigenvector-correlation and eigengap
    bounds at Monte-Carlo scale, each within 5 standard errors."""
    truth, w, opt = spectral_probe_model(seed=seed)
    partition = build_band_partition(RegularityParams(2.0, 2.0, 0.35))
    rec = population_probe(
        truth, w, mc_budget=mc_budget, seed=seed, partition=partition
    )
    s2n2 = rec.sin_theta**2 * rec.smoothed_norm**2
    out = []
    out.append(
        {
            "probe": "arranged_condition",
            "pass": bool(rec.sin_theta * rec.smoothed_norm >= 40.0 * math.sqrt(opt)),
            "sin_times_norm": rec.sin_theta * rec.smoothed_norm,
            "threshold": 40.0 * math.sqrt(opt),
        }
    )
    bound = s2n2 / 16.0
    out.append(
        {
            "probe": "alignment_lower_bound",
            "pass": bool(rec.v_quadform.value >= bound - 5.0 * rec.v_quadform.se),
            "value": rec.v_quadform.value,
            "se": rec.v_quadform.se,
            "bound": bound,
        }
    )
    worst = max(q.value - 5.0 * q.se for q in rec.orthogonal_quadforms)
    out.append(
        {
            "probe": "orthogonal_smallness",
            "pass": bool(worst <= 2.0 * opt),
            "worst_minus_5se": worst,
            "bound": 2.0 * opt,
            "directions": len(rec.orthogonal_quadforms),
        }
    )
    out.append(
        {
            "probe": "eigenvector_correlation",
            "pass": bool(rec.eig_corr >= math.sqrt(3.0) / 2.0 - 0.05),
            "value": rec.eig_corr,
            "bound": math.sqrt(3.0) / 2.0 - 0.05,
        }
    )
    gap_bound = s2n2 / 24.0
    out.append(
        {
            "probe": "eigengap_lower_bound",
            "pass": bool(rec.eigengap >= gap_bound - 5.0 * rec.eigengap_se),
            "value": rec.eigengap,
            "se": rec.eigengap_se,
            "bound": gap_bound,
        }
    )
    fact_bound = (2.0 / 3.0) * s2n2
    out.append(
        {
            "probe": "smoothed_gradient_correlation",
            "pass": bool(rec.grad_corr.value >= fact_bound - 3.0 * rec.grad_corr.se),
            "value": rec.grad_corr.value,
            "se": rec.grad_corr.se,
            "bound": fact_bound,
        }
    )
    return out
