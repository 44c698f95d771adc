import json
import warnings

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from basket_asymptotics.errors import DomainError, PreconditionError
from basket_asymptotics.model import BasketSpec
from basket_asymptotics.oracle import (
    QUARTIC_CONSTANT,
    MixedRegimeWarning,
    convolution_density,
    degenerate_strike,
    exact_density,
    h_function,
    h_minima,
    laplace_density,
    lognormal_params,
    lognormal_pdf,
    mc_density,
    quadrature_curve,
    reduced_density,
    reduced_density_grid,
)

UNIT2 = BasketSpec.symmetric(2)

# 40-digit mpmath evaluations of the convolution integral, frozen
REFERENCE = [
    (UNIT2, 4.0, 0.01, 1.6993434266357031e-21),
    (UNIT2, 4.0, 0.5, 0.052939053725654631),
    (UNIT2, 3.0, 0.2, 0.1496640249205356),
    (BasketSpec([1.0, 2.0], [0.3, 0.6], np.eye(2), rate=0.03, weights=[2.0, 0.5]), 3.1, 0.4, 0.6986043366266342),
]


def test_lognormal_examples():
    assert lognormal_pdf(1.0, 0.0, 1.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-15)
    mu, xi = 0.3, 0.4
    assert lognormal_pdf(np.exp(mu), mu, xi) == pytest.approx(1 / (np.sqrt(2 * np.pi) * xi * np.exp(mu)), rel=1e-15)
    assert lognormal_pdf(0.0, 0.0, 1.0) == 0.0
    assert lognormal_pdf(-1.0, 0.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        lognormal_pdf(1.0, 0.0, 0.0)


@pytest.mark.parametrize("mu,xi", [(0.0, 1.0), (1.2, 0.05), (-2.0, 2.5)])
def test_lognormal_normalized(mu, xi):
    # integrate in log space, where the mass is a unit Gaussian
    I, _ = quad(lambda y: lognormal_pdf(np.exp(y), mu, xi) * np.exp(y), mu - 12 * xi, mu + 12 * xi,
                epsabs=0, epsrel=1e-12)
    assert abs(I - 1) <= 1e-10


def test_lognormal_params():
    spec = BasketSpec([1.0, 2.0], [0.3, 0.6], np.eye(2), rate=0.03, weights=[2.0, 0.5])
    mu, xi = lognormal_params(spec, 0.4)
    np.testing.assert_allclose(mu, np.log([2.0, 1.0]) + (0.03 - np.array([0.3, 0.6]) ** 2 / 2) * 0.4)
    np.testing.assert_allclose(xi, np.array([0.3, 0.6]) * np.sqrt(0.4))


@pytest.mark.parametrize("spec,K,T,ref", REFERENCE)
def test_convolution_frozen_values(spec, K, T, ref):
    assert convolution_density(spec, K, T) == pytest.approx(ref, rel=1e-12)


def test_convolution_symmetric_in_assets():
    a = BasketSpec([1.0, 2.0], [0.3, 0.6], np.eye(2), weights=[2.0, 0.5])
    b = BasketSpec([2.0, 1.0], [0.6, 0.3], np.eye(2), weights=[0.5, 2.0])
    for K in (1.5, 3.0, 6.0):
        assert convolution_density(a, K, 0.7) == pytest.approx(convolution_density(b, K, 0.7), rel=1e-12)


@pytest.mark.parametrize("T", [0.01, 0.1, 1.0])
def test_convolution_normalized(T):
    # in log strike the mass is a near-Gaussian bump around log 2
    g = lambda u: convolution_density(UNIT2, np.exp(u), T) * np.exp(u)
    w = 12 * np.sqrt(T)
    I = sum(quad(g, a, b, epsabs=0, epsrel=1e-10, limit=200)[0]
            for a, b in [(np.log(2) - w, np.log(2)), (np.log(2), np.log(2) + w)])
    assert abs(I - 1) <= 1e-6


def test_convolution_needs_pair():
    with pytest.raises(PreconditionError):
        convolution_density(BasketSpec.symmetric(3), 3.0, 0.5)
    with pytest.raises(PreconditionError):
        convolution_density(BasketSpec([1, 1], [1, 1], [[1, 0.5], [0.5, 1]]), 3.0, 0.5)


def test_convolution_exponent_extrapolated():
    Ts = np.array([0.05, 0.02, 0.01])
    y = -Ts * np.log([convolution_density(UNIT2, 4.0, T) for T in Ts])
    # y = lam + a T log T + b T; solve the three-point system exactly
    A = np.column_stack([np.ones(3), Ts * np.log(Ts), Ts])
    lam = np.linalg.solve(A, y)[0]
    assert lam == pytest.approx(np.log(2) ** 2, rel=1e-3)


def test_exact_density_single_asset():
    spec = BasketSpec([1.5], [0.4], [[1.0]])
    mu, xi = lognormal_params(spec, 0.3)
    assert exact_density(spec, 1.7, 0.3) == lognormal_pdf(1.7, mu[0], xi[0])


def test_exact_density_dimension_limit():
    with pytest.raises(PreconditionError):
        exact_density(BasketSpec.symmetric(4), 4.0, 0.5)


def test_reduced_density_grid_matches_nested():
    spec = BasketSpec([1.0, 0.8, 1.3], [0.5, 0.3, 0.7], np.eye(3), weights=[1.0, 2.0, 0.5])
    Ks = np.array([2.0, 3.0, 4.5])
    grid = reduced_density_grid(spec, Ks, 0.3)
    nested = [reduced_density(spec, K, 0.3) for K in Ks]
    np.testing.assert_allclose(grid, nested, rtol=1e-9)


def test_quadrature_curve_three_assets_normalized():
    spec = BasketSpec.symmetric(3, vol=0.4)
    Ks = np.linspace(0.5, 12.0, 120)
    vals = quadrature_curve(spec, Ks, 0.5).values
    assert np.all(vals >= 0)
    assert np.trapezoid(vals, Ks) == pytest.approx(1.0, abs=1e-4)


# -- h and the Laplace approximation ----------------------------------------------------

@pytest.mark.parametrize("K", [3.0, 4.0, 2 * np.e])
@pytest.mark.parametrize("T", [0.01, 0.3])
def test_h_stationary_at_midpoint(K, T):
    hd = h_function(K, T, K / 2)
    assert hd.d1 == pytest.approx(0, abs=1e-14)
    assert hd.d2 == pytest.approx(16 * (1 - np.log(K / 2) - T / 2) / K**2, rel=1e-13)


@pytest.mark.parametrize("T", [0.001, 0.05, 0.4])
def test_h_degenerate_family(T):
    K = degenerate_strike(T)
    hd = h_function(K, T, K / 2)
    assert hd.d2 == pytest.approx(0, abs=1e-13)
    assert hd.h == pytest.approx(2, rel=1e-14)
    assert hd.d3 == pytest.approx(0, abs=1e-12)
    assert hd.d4 == pytest.approx(20 * np.exp(2 * T - 4), rel=1e-13)


def test_h_derivatives_by_differences():
    K, T, x = 3.7, 0.2, 1.1
    h = lambda s: h_function(K, T, s).h
    e = 1e-4
    hd = h_function(K, T, x)
    assert hd.d1 == pytest.approx((h(x + e) - h(x - e)) / (2 * e), rel=1e-7)
    assert hd.d2 == pytest.approx((h(x + e) - 2 * h(x) + h(x - e)) / e**2, rel=1e-5)
    d1 = lambda s: h_function(K, T, s).d1
    d3 = lambda s: h_function(K, T, s).d3
    assert hd.d2 == pytest.approx((d1(x + e) - d1(x - e)) / (2 * e), rel=1e-7)
    assert hd.d4 == pytest.approx((d3(x + e) - d3(x - e)) / (2 * e), rel=1e-6)


def test_h_domain():
    with pytest.raises(DomainError):
        h_function(3.0, 0.1, 3.0)


def test_h_minima():
    assert h_minima(4.0, 0.1) == [2.0]
    a, b = h_minima(8.0, 0.1)
    assert a + b == pytest.approx(8.0, rel=1e-15)
    assert h_function(8.0, 0.1, a).d1 == pytest.approx(0, abs=1e-10)
    assert h_function(8.0, 0.1, a).d2 > 0


def test_quartic_constant():
    assert QUARTIC_CONSTANT == pytest.approx(3**0.25 * gamma(0.25) / (5**0.25 * 2 * np.sqrt(2) * np.pi * np.e), rel=1e-15)


@pytest.mark.parametrize("T", [0.01, 0.1])
def test_laplace_quartic_branch(T):
    K = degenerate_strike(T)
    assert laplace_density(K, T) == pytest.approx(QUARTIC_CONSTANT * np.exp(-1 / T) * T**-0.75, rel=1e-15)


def test_laplace_k4_small_time():
    lap = laplace_density(4.0, 0.01)
    ref = convolution_density(UNIT2, 4.0, 0.01)
    assert abs(lap / ref - 1) <= 0.03


@pytest.mark.parametrize("K", [3.0, 4.0])
def test_laplace_ratio_tends_to_one(K):
    errs = [abs(laplace_density(K, T) / convolution_density(UNIT2, K, T) - 1) for T in (0.1, 0.03, 0.01, 0.003)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.01


def test_laplace_two_saddles():
    # beyond the degenerate strike both saddles contribute
    ref = convolution_density(UNIT2, 8.0, 0.005)
    assert laplace_density(8.0, 0.005) == pytest.approx(ref, rel=0.05)


def test_laplace_mixed_regime_warning():
    T = 0.1
    K = degenerate_strike(T) * (1 + 1e-6)
    with pytest.warns(MixedRegimeWarning):
        val = laplace_density(K, T)
    assert val == pytest.approx(convolution_density(UNIT2, K, T), rel=0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        laplace_density(4.0, T)


def test_laplace_domain():
    with pytest.raises(DomainError):
        laplace_density(-1.0, 0.1)


# -- Monte Carlo ------------------------------------------------------------------------

def test_mc_deterministic():
    Ks = np.linspace(1.0, 4.0, 7)
    a = mc_density(UNIT2, Ks, 0.5, n_paths=20000, seed=7)
    b = mc_density(UNIT2, Ks, 0.5, n_paths=20000, seed=7)
    c = mc_density(UNIT2, Ks, 0.5, n_paths=20000, seed=8)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.stderr, b.stderr)
    assert not np.array_equal(a.values, c.values)


def test_mc_single_asset():
    spec = BasketSpec([1.0], [0.3], [[1.0]])
    mu, xi = lognormal_params(spec, 1.0)
    Ks = np.linspace(0.5, 2.0, 16)
    curve = mc_density(spec, Ks, 1.0, n_paths=400000, seed=1, bandwidth="undersmoothed")
    ref = np.array([lognormal_pdf(K, mu[0], xi[0]) for K in Ks])
    assert np.all(np.abs(curve.values - ref) <= 3 * curve.stderr)


def test_mc_two_assets_at_k4():
    curve = mc_density(UNIT2, [4.0], 0.5, n_paths=10**6, seed=0, bandwidth="undersmoothed")
    ref = convolution_density(UNIT2, 4.0, 0.5)
    assert abs(curve.values[0] - ref) <= 3 * curve.stderr[0]


def test_mc_bandwidth_options():
    Ks = [1.0, 2.0]
    a = mc_density(UNIT2, Ks, 0.5, n_paths=10**4, bandwidth=0.1)
    assert a.bandwidth == 0.1
    with pytest.raises(DomainError):
        mc_density(UNIT2, Ks, 0.5, n_paths=10**4, bandwidth="scott")
    with pytest.raises(DomainError):
        mc_density(UNIT2, Ks, 0.5, n_paths=10**4, bandwidth=-1.0)
    with pytest.raises(DomainError):
        mc_density(UNIT2, Ks, 0.5, n_paths=999)


def test_curve_serialization():
    curve = mc_density(UNIT2, [1.0, 2.0], 0.5, n_paths=10**4)
    doc = json.loads(curve.to_json())
    assert doc["method"] == "monte_carlo" and len(doc["stderr"]) == 2
    lines = curve.to_csv().splitlines()
    assert lines[0] == "K,value,stderr,method"
    assert float(lines[1].split(",")[1]) == curve.values[0]
