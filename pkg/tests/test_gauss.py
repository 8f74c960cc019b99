import math

import numpy as np
import pytest

from monosim.core import BoundedSmooth, GeneralReLU
from monosim import gauss as G


def test_rule_invariants():
    for order in (16, 64, 128):
        rule = G.gauss_hermite_rule(order)
        assert abs(rule.weights.sum() - 1.0) <= 1e-12
        assert np.all(rule.weights > 0)
        np.testing.assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-12)


def test_ou_smooth_trivials():
    assert G.ou_smooth(lambda z: np.full_like(z, 2.5), 0.7, -1.3) == pytest.approx(2.5)
    assert G.ou_smooth(lambda z: z, 0.5, 2.0) == pytest.approx(1.0, abs=1e-12)
    step = lambda z: (z >= 0).astype(float)
    assert G.ou_smooth(step, 0.3, 0.0, breaks=(0.0,)) == pytest.approx(0.5, abs=1e-12)


def test_ou_smooth_rejects_bad_rho():
    for rho in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            G.ou_smooth(lambda z: z, rho, 0.0)


def test_ou_smooth_vectorized():
    xs = np.linspace(-2, 2, 11)
    out = G.ou_smooth(lambda z: z, 0.5, xs)
    np.testing.assert_allclose(out, 0.5 * xs, atol=1e-12)


def test_l2_norm_examples():
    assert G.l2_norm(lambda z: z) == pytest.approx(1.0, abs=1e-12)
    assert G.l2_norm(lambda z: np.full_like(z, 3.0)) == pytest.approx(3.0, abs=1e-12)
    relu_prime = lambda z: (z >= 0).astype(float)
    assert G.l2_norm(relu_prime, breaks=(0.0,)) == pytest.approx(
        1.0 / math.sqrt(2.0), abs=1e-10
    )


def test_composition_polynomials():
    for k in range(7):
        rep = G.check_semigroup_identities(lambda z, k=k: z**k, 0.6, 0.5)
        assert rep.composition_residual <= 1e-8, (k, rep.composition_residual)


def test_composition_exact_on_constants():
    rep = G.check_semigroup_identities(lambda z: np.ones_like(z), 0.4, 0.9)
    assert rep.composition_residual <= 1e-13


def test_nonexpansive_cubic():
    rep = G.check_semigroup_identities(lambda z: z**3, 0.7, 0.8)
    assert rep.nonexpansive_ratio <= 1.0 + 1e-10


def test_smoothed_norm_identity_fixed():
    ident = BoundedSmooth(lambda z: z, lambda z: np.ones_like(z), "identity")
    for rho in (0.2, 0.5, 0.9):
        assert G.smoothed_derivative_norm(ident, rho) == pytest.approx(1.0, abs=1e-9)


def test_smoothed_norm_monotone_in_rho_for_relu():
    relu = GeneralReLU(0.0)
    lo = G.smoothed_derivative_norm(relu, 0.5)
    hi = G.smoothed_derivative_norm(relu, 0.9)
    assert hi >= lo - 1e-12


def test_smoothed_norm_matches_monte_carlo():
    relu = GeneralReLU(0.0)
    rho = 0.5
    val = G.smoothed_derivative_norm(relu, rho)
    rng = np.random.default_rng(11)
    n = 10**6
    x = rng.standard_normal(n)
    s = math.sqrt(1 - rho * rho)
    z1, z2 = rng.standard_normal(n), rng.standard_normal(n)
    prod = ((rho * x + s * z1) >= 0).astype(float) * ((rho * x + s * z2) >= 0)
    mc, se = prod.mean(), prod.std() / math.sqrt(n)
    assert abs(val**2 - mc) <= 3 * se


def test_closed_form_matches_quadrature():
    # internal oracle pair: piecewise-constant smoothing vs generic quadrature
    edges = np.array([-0.5, 1.0])
    levels = np.array([0.2, 1.0, 3.0])
    rho = 0.77
    fast = G.smooth_piecewise_constant(edges, levels, rho)

    def g(z):
        z = np.asarray(z, dtype=float)
        return np.where(z < -0.5, 0.2, np.where(z < 1.0, 1.0, 3.0))

    xs = np.linspace(-3, 3, 13)
    slow = G.ou_smooth(g, rho, xs, breaks=(-0.5, 1.0))
    np.testing.assert_allclose(fast(xs), slow, atol=1e-10)


def test_smoothing_error_linear_exact():
    lhs, rhs = G.check_smoothing_error(lambda z: z, lambda z: np.ones_like(z), 0.9)
    assert lhs == pytest.approx((1 - 0.9) ** 2, abs=1e-10)
    assert rhs == pytest.approx(0.3, abs=1e-12)
    assert lhs <= rhs


def test_smoothing_error_constant_zero():
    lhs, rhs = G.check_smoothing_error(
        lambda z: np.full_like(z, 4.0), lambda z: np.zeros_like(z), 0.5
    )
    assert lhs == pytest.approx(0.0, abs=1e-12)
    assert rhs == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("rho", [0.5, 0.9, 0.99])
def test_smoothing_error_bound_smooth_ramp(rho):
    ramp = lambda z: np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
    ramp_prime = lambda z: 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))
    lhs, rhs = G.check_smoothing_error(ramp, ramp_prime, rho)
    assert lhs <= rhs + 1e-9


def test_smoothing_symmetry():
    relu = GeneralReLU(0.0)
    t = 0.6
    lhs = G.gaussian_expectation(
        lambda z: G.ou_smooth(relu.evaluate, t, z, breaks=(0.0,)) * (z**2)
    )
    rhs = G.gaussian_expectation(
        lambda z: G.ou_smooth(lambda q: q**2, t, z) * relu.evaluate(z), breaks=(0.0,)
    )
    assert abs(lhs - rhs) <= 1e-8


def test_angle_examples():
    assert G.angle([1.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert G.angle([1.0, 0.0], [0.0, 2.0]) == pytest.approx(math.pi / 2)
    assert G.angle([1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.pi / 4)
    assert G.angle([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        G.angle([0.0, 0.0], [1.0, 0.0])


def test_smoothed_function_wrapper():
    sm = G.SmoothedFunction(base=lambda z: z, rho=0.25)
    assert sm(4.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        G.SmoothedFunction(base=lambda z: z, rho=1.5)
