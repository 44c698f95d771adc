import json
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from basket_asymptotics.bvp import solve_bvp, symmetric_closed_form
from basket_asymptotics.errors import BracketError, PreconditionError
from basket_asymptotics.focality import (
    FOCAL_TOL,
    analytic_focality_matrix,
    classify,
    critical_strike,
    focal_crossing_strike,
    focality_at,
    focality_matrix,
    geometric_vs_hamiltonian_check,
    origin_is_focal,
    perturbation_basis,
    symmetric_det,
)
from basket_asymptotics.hamiltonian import HamiltonianSystem
from basket_asymptotics.model import BasketSpec
from strategies import specs


def two_asset_det(sigma, K):
    # determinant with columns (normal momentum, tangent position)
    return 2 * sigma**2 * (1 - np.log(K / 2))


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.7])
@pytest.mark.parametrize("K", [2.5, 3.0, 4.0, 7.0])
def test_two_asset_det(sigma, K):
    sys = HamiltonianSystem(BasketSpec.symmetric(2, vol=sigma))
    r = focality_matrix(sys, symmetric_closed_form(sys, K))
    assert r.det == pytest.approx(two_asset_det(sigma, K), rel=1e-7)
    # magnitude of the displayed 2 sigma^2 (log(K/2) - 1)
    assert abs(r.det) == pytest.approx(abs(2 * sigma**2 * (np.log(K / 2) - 1)), rel=1e-7)
    assert r.verdict == "non_focal"


def test_critical_point_is_focal(unit2):
    r = focality_matrix(unit2, symmetric_closed_form(unit2, 2 * np.e))
    assert abs(r.det) <= 1e-9
    assert r.verdict == "focal"
    assert focality_matrix(unit2, symmetric_closed_form(unit2, 2 * np.e), method="analytic").det == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
@pytest.mark.parametrize("ratio", [1.3, 2.0, 3.5])
def test_symmetric_det_formula(d, ratio):
    sigma = 0.7
    sys = HamiltonianSystem(BasketSpec.symmetric(d, vol=sigma))
    K = ratio * d
    ref = symmetric_det(d, sigma, K)
    for method in ("fd", "analytic"):
        r = focality_matrix(sys, symmetric_closed_form(sys, K), method=method)
        assert r.det == pytest.approx(ref, rel=1e-7 if method == "fd" else 1e-12)


def test_analytic_matches_fd_two_assets(unit2):
    for K in np.linspace(2.2, 8.0, 30):
        c = symmetric_closed_form(unit2, K)
        fd = focality_matrix(unit2, c).det
        exact = two_asset_det(1.0, K)
        if abs(K - 2 * np.e) > 1e-3:
            assert abs(fd / exact - 1) <= 1e-6
        M = analytic_focality_matrix(unit2, c.x1, c.p1)
        assert np.linalg.det(M) == pytest.approx(exact, rel=1e-12, abs=1e-15)


@given(specs(d_min=2, d_max=5), st.floats(0.7, 1.6))
def test_exact_jacobian_matches_fd(spec, moneyness):
    sys = HamiltonianSystem(spec)
    c = solve_bvp(sys, moneyness * spec.forward_basket).candidates[0]
    fd = focality_matrix(sys, c).M
    ex = focality_matrix(sys, c, method="analytic").M
    assert np.max(np.abs(fd - ex)) <= 1e-6 * max(1, np.max(np.abs(ex)))


def test_analytic_matrix_needs_uncorrelated():
    sys = HamiltonianSystem(BasketSpec([1, 1], [1, 1], [[1, 0.3], [0.3, 1]]))
    with pytest.raises(PreconditionError):
        analytic_focality_matrix(sys, [1, 1], [1, 1])


def test_unknown_method(unit2):
    with pytest.raises(ValueError):
        focality_matrix(unit2, symmetric_closed_form(unit2, 3.0), method="ad")


def test_perturbation_basis_tangent():
    w = np.array([0.5, 2.0, 1.5])
    q, Z = perturbation_basis(w)
    np.testing.assert_array_equal(q, w)
    np.testing.assert_allclose(w @ Z, 0, atol=1e-15)
    assert np.linalg.matrix_rank(Z) == 2


def test_classify_thresholds():
    assert classify(0.0, 1.0) == "focal"
    assert classify(1e-9, 1.0) == "focal"
    assert classify(1e-6, 1.0) == "near_focal"
    assert classify(1e-3, 1.0) == "non_focal"
    assert classify(1.0, 0.0) == "focal"


def test_report_serializes(unit2):
    doc = json.loads(json.dumps(focality_at(unit2, 4.0).to_dict()))
    assert doc["verdict"] == "non_focal" and len(doc["M"]) == 2


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_critical_strike_symmetric(d):
    t0 = time.perf_counter()
    K = critical_strike(HamiltonianSystem(BasketSpec.symmetric(d)))
    assert abs(K / (d * np.e) - 1) <= 1e-10
    assert time.perf_counter() - t0 < 5.0


def test_critical_strike_fd_two_assets(unit2):
    assert critical_strike(unit2, method="fd") == pytest.approx(2 * np.e, rel=1e-10)


@pytest.mark.parametrize("s", [0.5, 2.0, 10.0])
def test_critical_strike_scales_with_spot(s):
    sys = HamiltonianSystem(BasketSpec.symmetric(2, spot=s))
    assert critical_strike(sys) == pytest.approx(2 * s * np.e, rel=1e-10)


@pytest.mark.parametrize("c", [0.1, 3.0, 40.0])
def test_critical_ratio_scale_covariant(c):
    base = BasketSpec([1.0, 1.0, 1.0], [0.6, 0.6, 0.6], np.eye(3))
    scaled = BasketSpec(c * base.spots, base.vols, base.corr)
    k1 = critical_strike(HamiltonianSystem(base))
    k2 = critical_strike(HamiltonianSystem(scaled))
    assert k2 / (c * k1) == pytest.approx(1, rel=1e-9)


def test_bracket_error(unit2):
    with pytest.raises(BracketError):
        critical_strike(unit2, 3.0, 5.0)
    with pytest.raises(BracketError):
        critical_strike(unit2, 5.0, 3.0)


@pytest.mark.parametrize("d", [2, 4])
def test_single_sign_change_even_d(d):
    sys = HamiltonianSystem(BasketSpec.symmetric(d))
    Ks = np.linspace(1.001 * d, 10 * d, 200)
    dets = np.array([focality_at(sys, K, method="analytic").det for K in Ks])
    assert np.count_nonzero(np.diff(np.sign(dets))) == 1


@pytest.mark.parametrize("d", [3, 5])
def test_touch_zero_odd_d(d):
    """For odd d the determinant keeps its sign and only touches zero at K = d e."""
    sys = HamiltonianSystem(BasketSpec.symmetric(d))
    Ks = np.linspace(1.001 * d, 10 * d, 200)
    dets = np.array([focality_at(sys, K, method="analytic").det for K in Ks])
    assert np.count_nonzero(np.diff(np.sign(dets))) == 0
    assert focality_at(sys, d * np.e, method="analytic").verdict == "focal"


def test_correlated_symmetric_critical_strike():
    # with equal correlation the branch turns focal well above d e
    spec = BasketSpec.symmetric(2)
    spec = BasketSpec(spec.spots, spec.vols, [[1, 0.3], [0.3, 1]])
    sys = HamiltonianSystem(spec)
    K = critical_strike(sys, 6.0, 30.0)
    assert focality_at(sys, K, method="analytic").verdict == "focal"
    # the multistart solver sees the extra roots appear across K*
    assert solve_bvp(sys, 0.99 * K).n_solutions_found == 1
    assert solve_bvp(sys, 1.01 * K).n_solutions_found == 3


# -- geometric side -----------------------------------------------------------------

@pytest.mark.parametrize("K,expected", [(4.0, False), (2 * np.e, True), (2 / np.e, False), (7.0, False)])
def test_geometric_and_flow_verdicts(unit2, K, expected):
    assert origin_is_focal(unit2, K) is expected
    assert geometric_vs_hamiltonian_check(unit2, K)


def test_geometric_check_precondition():
    with pytest.raises(PreconditionError):
        geometric_vs_hamiltonian_check(HamiltonianSystem(BasketSpec.symmetric(3)), 4.0)


@pytest.mark.parametrize("vols", [(1.0, 1.0), (0.5, 0.5), (0.7, 0.7)])
def test_focal_crossing_matches_critical(vols):
    sys = HamiltonianSystem(BasketSpec([1.0, 1.0], vols, np.eye(2)))
    assert abs(focal_crossing_strike(sys) / critical_strike(sys) - 1) <= 1e-8


def test_unequal_vols_never_focal():
    # the branch bifurcation is imperfect: neither test finds a crossing
    sys = HamiltonianSystem(BasketSpec([1.0, 1.0], [0.3, 0.8], np.eye(2)))
    with pytest.raises(BracketError):
        critical_strike(sys)
    with pytest.raises(BracketError):
        focal_crossing_strike(sys)
    for K in (2.5, 5.0, 10.0, 20.0):
        assert focality_at(sys, K).verdict == "non_focal"


def test_focal_crossing_tolerance():
    assert FOCAL_TOL == 1e-8
