"""Threshold-grid initialization: each label threshold turns the regression
problem into a halfspace-learning instance, and every informative threshold
contributes one candidate starting direction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import _kernels as kernels
from .core import Dataset, RegularityParams
from .util import child_rng, normalize


class UninformativeThreshold(RuntimeError):
    """All labels fall on one side of the threshold; no direction signal."""


@dataclass(frozen=True)
class ThresholdGrid:
    """Thresholds t_i = i * sqrt(eps), i = 1 .. ceil(B / sqrt(eps)) + 1."""

    thresholds: np.ndarray

    def __len__(self):
        return self.thresholds.size


@dataclass(frozen=True)
class HalfspaceInstance:
    data: Dataset
    positive_rate: float


def build_threshold_grid(params: RegularityParams) -> ThresholdGrid:
    root = math.sqrt(params.eps)
    count = math.ceil(params.B / root) + 1
    return ThresholdGrid(thresholds=root * np.arange(1, count + 1, dtype=float))


def transform_labels(data: Dataset, t: float) -> HalfspaceInstance:
    """Binary labels 1{y >= t}; covariates are shared, not copied."""
    yb = (data.y >= t).astype(float)
    out = Dataset.__new__(Dataset)
    out.X = data.X
    out.y = yb
    out.y.setflags(write=False)
    return HalfspaceInstance(data=out, positive_rate=float(yb.mean()))


def chow_direction(instance: HalfspaceInstance) -> np.ndarray:
    """Normalized mean of y * x; proportional to the halfspace normal in
    population for any biased Gaussian halfspace."""
    v = instance.data.y @ instance.data.X / instance.data.n
    return normalize(v)


REFINE_PASSES = 200
REFINE_LR = 0.1
REFINE_TAU = 0.1
REFINE_BATCH = 8192
REFINE_SAMPLE_CAP = 50_000  # refinement passes run on a prefix of this size


def robust_halfspace_learn(
    instance: HalfspaceInstance, eps: float, seed: int = 0
) -> np.ndarray:
    """Estimate the halfspace normal from binary labels.

    Stage 1 is the Chow direction; stage 2 refines it with projected
    stochastic subgradient passes on the sigmoid surrogate of the
    disagreement, with the offset matched to the empirical positive rate.
    The routine is pluggable: any callable with this signature can replace
    it in the pipeline.
    """
    rate = instance.positive_rate
    if not 0.0 < rate < 1.0:
        raise UninformativeThreshold(
            f"positive rate {rate} carries no direction information"
        )
    del seed  # deterministic default: fixed pass order, no randomized batching
    w0 = chow_direction(instance)
    b = float(ndtri(1.0 - rate))
    cap = min(instance.data.n, REFINE_SAMPLE_CAP)
    w = kernels.halfspace_refine(
        instance.data.X[:cap],
        instance.data.y[:cap],
        w0,
        b,
        REFINE_PASSES,
        REFINE_LR,
        REFINE_TAU,
        REFINE_BATCH,
    )
    return normalize(w)


@dataclass
class InitializationResult:
    candidates: list[np.ndarray]
    thresholds_used: list[float]
    warnings: list[str] = field(default_factory=list)


def initialize(
    data: Dataset, params: RegularityParams, seed: int = 0
) -> InitializationResult:
    """One candidate direction per informative threshold of the grid.

    Degenerate thresholds are skipped (the testing stage covers every
    candidate anyway); if nothing is informative the caller falls back on
    the constant-hypothesis candidate.
    """
    grid = build_threshold_grid(params)
    result = InitializationResult(candidates=[], thresholds_used=[])
    for i, t in enumerate(grid.thresholds):
        instance = transform_labels(data, t)
        try:
            w = robust_halfspace_learn(instance, params.eps, seed=child_seed(seed, i))
        except UninformativeThreshold:
            continue
        result.candidates.append(w)
        result.thresholds_used.append(float(t))
    if not result.candidates:
        result.warnings.append(
            "all thresholds uninformative; relying on the constant-hypothesis candidate"
        )
    return result


def child_seed(seed: int, i: int) -> int:
    return int(child_rng(seed, "threshold", i).integers(2**62))
