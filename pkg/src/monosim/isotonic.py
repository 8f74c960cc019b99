"""Monotone beta-Lipschitz least-squares fitting along a direction, and the
holdout-loss selection over a pool of candidate directions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .core import (
    Dataset,
    Hypothesis,
    PiecewiseLinearMonotone,
    RegularityParams,
    constant_hypothesis,
    squared_loss,
)
from .gauss import angle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IsoInstance:
    """Sorted projections with labels and the Lipschitz bound of the fit."""

    z: np.ndarray
    y: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.z.shape != self.y.shape or self.z.ndim != 1 or self.z.size == 0:
            raise ValueError("z and y must be matching nonempty 1-d arrays")
        if np.any(np.diff(self.z) < 0):
            raise ValueError("projections must be sorted non-decreasing")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class IsoSolution:
    v: np.ndarray
    objective: float


def solve_iso(instance: IsoInstance) -> IsoSolution:
    """Exact minimizer of sum (v_i - y_i)^2 subject to
    0 <= v_{i+1} - v_i <= beta * (z_{i+1} - z_i).

    Ties in z force equal fitted values.  Increment caps larger than the
    label range are inactive at the optimum, so they are clipped before the
    solve; this keeps the beta = inf limit (plain isotonic regression)
    numerically exact.
    """
    y = instance.y
    if y.size == 1:
        return IsoSolution(v=y.copy(), objective=0.0)
    dz = np.diff(instance.z)
    span = float(y.max() - y.min()) + 1.0
    with np.errstate(invalid="ignore"):
        c = np.where(dz > 0, np.minimum(instance.beta * dz, span), 0.0)
    v = kernels.iso_solve(y, c)
    resid = v - y
    return IsoSolution(v=v, objective=float(resid @ resid))


def interpolate_hypothesis(
    instance: IsoInstance, sol: IsoSolution, w: np.ndarray, B: float
) -> Hypothesis:
    """Linear interpolation of (z_i, v_i) as a piecewise-linear activation,
    constant beyond the data range, values clamped to [-B, B]."""
    keep = np.concatenate(([True], np.diff(instance.z) > 0))
    knots = instance.z[keep]
    values = sol.v[keep]
    overshoot = float(np.max(np.abs(values))) - B
    if overshoot > 0:
        if overshoot > 1e-9:
            log.warning(
                "isotonic fit exceeded the label bound %.3g by %.3g; clamping",
                B,
                overshoot,
            )
        values = np.clip(values, -B, B)
    beta = instance.beta
    if not math.isfinite(beta):
        beta = float(np.max(np.diff(values) / np.diff(knots))) if knots.size > 1 else 0.0
    return Hypothesis(w=w, u=PiecewiseLinearMonotone(knots, values), lipschitz_bound=beta)


def fit_candidate(
    w: np.ndarray, fit_data: Dataset, beta: float, B: float
) -> tuple[Hypothesis, float]:
    """Best monotone beta-Lipschitz activation along w on the fit split."""
    z = fit_data.X @ w
    order = np.argsort(z, kind="stable")
    instance = IsoInstance(z=z[order], y=fit_data.y[order], beta=beta)
    sol = solve_iso(instance)
    return interpolate_hypothesis(instance, sol, w, B), sol.objective


def default_lipschitz_bound(params: RegularityParams) -> float:
    """B * L / sqrt(eps): the Lipschitz cover of the regular class."""
    return params.B * params.L / math.sqrt(params.eps)


def test_and_select(
    candidates,
    fit_data: Dataset,
    holdout_data: Dataset,
    params: RegularityParams,
    beta: float | None = None,
    include_constant: bool = True,
    w_star: np.ndarray | None = None,
) -> tuple[Hypothesis, list[dict]]:
    """Fit every candidate direction on fit_data, pick the smallest holdout
    loss.  A constant fit is entered alongside the candidates so the pool is
    never empty; pass ``w_star`` to record angles in the report."""
    if beta is None:
        beta = default_lipschitz_bound(params)
    entries: list[tuple[Hypothesis, dict]] = []
    for i, w in enumerate(candidates):
        hyp, objective = fit_candidate(np.asarray(w, dtype=float), fit_data, beta, params.B)
        rec = {
            "candidate": i,
            "fit_objective": objective,
            "holdout_loss": squared_loss(holdout_data, hyp),
        }
        if w_star is not None:
            rec["angle_to_truth"] = angle(hyp.w, w_star)
        entries.append((hyp, rec))
    if include_constant:
        value = float(np.clip(np.mean(fit_data.y), -params.B, params.B))
        hyp = constant_hypothesis(value, fit_data.dim)
        resid = value - fit_data.y
        rec = {
            "candidate": "constant",
            "fit_objective": float(resid @ resid),
            "holdout_loss": squared_loss(holdout_data, hyp),
        }
        entries.append((hyp, rec))
    if not entries:
        raise ValueError("no candidates to test")
    best = min(range(len(entries)), key=lambda i: entries[i][1]["holdout_loss"])
    report = [rec for _, rec in entries]
    report[best]["selected"] = True
    return entries[best][0], report
