"""Quadrature-backed Gaussian smoothing and L2 functionals.

Everything here is oracle/probe machinery: it evaluates expectations
against the standard normal by Gauss-Hermite quadrature (Gauss-Legendre
segments when the integrand has jumps or kinks), and exposes the smoothing
operator g -> E_z[g(rho*x + sqrt(1-rho^2) z)] together with residual checks
for its algebraic identities.  None of this runs on the learner's hot path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

_TAIL_CUTOFF = 10.0  # N(0,1) mass beyond is ~1.5e-23, below every tolerance here
_HERMITE_STABLE_MAX = 256  # hermgauss weights overflow to nan past ~400 nodes


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for E_{z~N(0,1)}[f(z)] ~ sum_i w_i f(z_i).

    Weights are normalized to sum to 1 so the rule is an expectation, and
    nodes are symmetric about 0.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=32)
def _hermgauss_base(order: int):
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return nodes, weights


@lru_cache(maxsize=32)
def _leggauss_base(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule: exact for polynomials of degree < 2*order."""
    nodes, weights = _hermgauss_base(order)
    return QuadratureRule(nodes * math.sqrt(2.0), weights / math.sqrt(math.pi), order)


def _segmented_rule(breaks: Sequence[float], order: int) -> QuadratureRule:
    """Gauss-Legendre panels between breakpoints, with the normal density folded in."""
    pts = [b for b in sorted(set(float(b) for b in breaks)) if abs(b) < _TAIL_CUTOFF]
    edges = np.array([-_TAIL_CUTOFF] + pts + [_TAIL_CUTOFF])
    gl_nodes, gl_weights = _leggauss_base(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        zs = mid + half * gl_nodes
        nodes.append(zs)
        weights.append(half * gl_weights * np.exp(-0.5 * zs * zs) / math.sqrt(2 * math.pi))
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights), order)


def gaussian_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    breaks: Sequence[float] = (),
    order: int = 64,
    tol: float = 1e-9,
    max_order: int = 1024,
) -> float:
    """E_{z~N(0,1)}[f(z)], doubling the order until two rules agree within tol.

    Smooth integrands use Gauss-Hermite up to its stable order; integrands
    with breakpoints, or smooth ones that have not yet converged there, use
    Gauss-Legendre panels split at the breakpoints.
    """
    est = None
    if not len(breaks):
        o = order
        rule = gauss_hermite_rule(o)
        est = float(rule.weights @ f(rule.nodes))
        while o < _HERMITE_STABLE_MAX:
            o *= 2
            rule = gauss_hermite_rule(o)
            nxt = float(rule.weights @ f(rule.nodes))
            if abs(nxt - est) <= tol * max(1.0, abs(nxt)):
                return nxt
            est = nxt
    o = order
    rule = _segmented_rule(breaks, o)
    est = float(rule.weights @ f(rule.nodes))
    while o < max_order:
        o *= 2
        rule = _segmented_rule(breaks, o)
        nxt = float(rule.weights @ f(rule.nodes))
        if abs(nxt - est) <= tol * max(1.0, abs(nxt)):
            return nxt
        est = nxt
    return est


def ou_smooth(
    f: Callable[[np.ndarray], np.ndarray],
    rho: float,
    x,
    breaks: Sequence[float] = (),
    order: int = 64,
):
    """Gaussian smoothing (T_rho f)(x) = E_z[f(rho*x + sqrt(1-rho^2) z)].

    Vectorized over x.  ``breaks`` lists points where f jumps or kinks; the
    inner integral is then split there (per x), since plain quadrature
    converges slowly across discontinuities.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    x_arr = np.asarray(x, dtype=float)
    s = math.sqrt(1.0 - rho * rho)
    if not len(breaks):
        rule = gauss_hermite_rule(order)
        vals = f(rho * x_arr[..., None] + s * rule.nodes) @ rule.weights
        return float(vals) if x_arr.ndim == 0 else vals
    flat = np.atleast_1d(x_arr).ravel()
    out = np.empty(flat.shape)
    for i, xi in enumerate(flat):
        zb = [(b - rho * xi) / s for b in breaks]
        rule = _segmented_rule(zb, order)
        out[i] = rule.weights @ f(rho * xi + s * rule.nodes)
    if x_arr.ndim == 0:
        return float(out[0])
    return out.reshape(x_arr.shape)


def smooth_piecewise_constant(edges: np.ndarray, levels: np.ndarray, rho: float):
    """Closed form of T_rho g for g piecewise constant.

    g(z) = levels[i] on [edges[i-1], edges[i]), with len(levels) ==
    len(edges) + 1.  Returns a vectorized callable in x.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    edges = np.asarray(edges, dtype=float)
    levels = np.asarray(levels, dtype=float)
    jumps = np.diff(levels)  # mass entering at each edge
    s = math.sqrt(1.0 - rho * rho)

    def smoothed(x):
        x_arr = np.asarray(x, dtype=float)
        cdf = ndtr((rho * x_arr[..., None] - edges) / s)
        vals = levels[0] + cdf @ jumps
        return float(vals) if x_arr.ndim == 0 else vals

    return smoothed


def l2_norm(
    f: Callable[[np.ndarray], np.ndarray],
    breaks: Sequence[float] = (),
    order: int = 64,
) -> float:
    """Gaussian L2 norm (E[f(z)^2])^(1/2)."""
    val = gaussian_expectation(lambda z: np.asarray(f(z)) ** 2, breaks, order)
    return math.sqrt(max(val, 0.0))


def smoothed_derivative_norm(sigma, rho: float, order: int = 64) -> float:
    """||T_rho sigma'||_{L2}.

    Uses the closed-form smoothing when sigma' is piecewise constant,
    otherwise nested quadrature.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    steps = sigma.derivative_steps() if hasattr(sigma, "derivative_steps") else None
    if steps is not None and steps[0].size:
        smoothed = smooth_piecewise_constant(steps[0], steps[1], rho)
        return l2_norm(smoothed, order=order)
    if steps is not None:  # constant derivative levels, e.g. a flat threshold
        return abs(float(steps[1][0]))
    breaks = getattr(sigma, "breaks", ())
    smoothed = lambda x: ou_smooth(sigma.derivative, rho, x, breaks=breaks, order=order)
    return l2_norm(smoothed, order=order)


@dataclass(frozen=True)
class SmoothedFunction:
    """A function together with its smoothing level; calling evaluates T_rho base."""

    base: Callable[[np.ndarray], np.ndarray]
    rho: float
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")

    def __call__(self, x):
        return ou_smooth(self.base, self.rho, x, breaks=self.breaks)


@dataclass(frozen=True)
class SemigroupReport:
    composition_residual: float
    nonexpansive_ratio: float


def check_semigroup_identities(
    f: Callable[[np.ndarray], np.ndarray],
    t: float,
    s: float,
    breaks: Sequence[float] = (),
    grid: np.ndarray | None = None,
) -> SemigroupReport:
    """Residuals for T_t T_s f = T_{ts} f and the norm ratio ||T_{ts} f|| / ||f||."""
    for r in (t, s):
        if not 0.0 < r < 1.0:
            raise ValueError(f"semigroup parameters must lie in (0, 1), got {r}")
    if grid is None:
        grid = np.linspace(-3.0, 3.0, 13)
    inner = lambda xp: ou_smooth(f, s, xp, breaks=breaks)
    composed = ou_smooth(inner, t, grid)
    direct = ou_smooth(f, t * s, grid, breaks=breaks)
    residual = float(np.max(np.abs(composed - direct)))
    nf = l2_norm(f, breaks)
    nsm = l2_norm(lambda x: ou_smooth(f, t * s, x, breaks=breaks))
    ratio = nsm / nf if nf > 0 else 0.0
    return SemigroupReport(residual, ratio)


def check_smoothing_error(
    f: Callable[[np.ndarray], np.ndarray],
    fprime: Callable[[np.ndarray], np.ndarray],
    rho: float,
    breaks: Sequence[float] = (),
) -> tuple[float, float]:
    """Both sides of E[(T_rho f - f)^2] <= 3 (1 - rho) E[f'^2].

    Valid for continuous, a.e. differentiable f.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    smoothed = lambda z: ou_smooth(f, rho, z, breaks=breaks)
    lhs = gaussian_expectation(lambda z: (smoothed(z) - f(z)) ** 2, breaks)
    rhs = 3.0 * (1.0 - rho) * gaussian_expectation(lambda z: np.asarray(fprime(z)) ** 2, breaks)
    return lhs, rhs


def angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two vectors in [0, pi]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("angle undefined for the zero vector")
    a, b = u / nu, v / nv
    return 2.0 * math.atan2(np.linalg.norm(a - b), np.linalg.norm(a + b))


# ---------------------------------------------------------------------------
# catalog of oracle functions used by the residual suites


@dataclass(frozen=True)
class CatalogFunction:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    breaks: tuple[float, ...] = ()
    continuous: bool = True
    degree: int | None = None


def _poly(k):
    return lambda z: np.asarray(z, dtype=float) ** k


def _poly_deriv(k):
    if k == 0:
        return lambda z: np.zeros_like(np.asarray(z, dtype=float))
    return lambda z: k * np.asarray(z, dtype=float) ** (k - 1)


CATALOG: tuple[CatalogFunction, ...] = tuple(
    [
        CatalogFunction("constant", lambda z: np.full_like(np.asarray(z, float), 1.5),
                        lambda z: np.zeros_like(np.asarray(z, float)), degree=0),
        CatalogFunction("identity", _poly(1), _poly_deriv(1), degree=1),
    ]
    + [CatalogFunction(f"poly{k}", _poly(k), _poly_deriv(k), degree=k) for k in range(2, 7)]
    + [
        CatalogFunction(
            "relu",
            lambda z: np.maximum(0.0, np.asarray(z, float)),
            lambda z: (np.asarray(z, float) >= 0).astype(float),
            breaks=(0.0,),
        ),
        CatalogFunction(
            "smooth_ramp",
            lambda z: np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0),  # softplus
            lambda z: 1.0 / (1.0 + np.exp(-np.asarray(z, float))),
        ),
        CatalogFunction(
            "tanh",
            lambda z: np.tanh(z),
            lambda z: 1.0 / np.cosh(np.asarray(z, float)) ** 2,
        ),
        CatalogFunction(
            "threshold",
            lambda z: (np.asarray(z, float) >= 0).astype(float),
            lambda z: np.zeros_like(np.asarray(z, float)),
            breaks=(0.0,),
            continuous=False,
        ),
        CatalogFunction(
            "threshold_biased",
            lambda z: (np.asarray(z, float) >= 0.7).astype(float),
            lambda z: np.zeros_like(np.asarray(z, float)),
            breaks=(0.7,),
            continuous=False,
        ),
    ]
)
