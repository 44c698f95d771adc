"""Non-focality of the starting point and the critical strike.

The Hamiltonian test differentiates the inverse flow, projected on positions,
with respect to terminal perturbations that keep the boundary conditions:
a momentum perturbation ``eta * w`` normal to the strike surface (first column)
and position perturbations ``z_l = e_1 / w_1 - e_l / w_l`` tangent to it. The
start point is focal exactly when this d x d matrix is singular.

The geometric test works in the Euclidean chart: the origin is focal for the
strike surface when it coincides with the focal point attached to the closest
surface point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bvp import MinimizerCandidate, log_ratio_seed, make_candidate, newton_shoot, symmetric_closed_form
from .errors import BracketError, ConvergenceError, PreconditionError
from .geometry import focal_point_2d, weingarten
from .hamiltonian import HamiltonianSystem, inverse_flow_batch
from .model import to_chart

FOCAL_TOL = 1e-8
NEAR_FOCAL_TOL = 1e-4
VERDICTS = ("non_focal", "near_focal", "focal")


@dataclass(frozen=True, eq=False)
class FocalityReport:
    K: float
    M: np.ndarray
    det: float
    scale: float
    verdict: str
    det_tol: float = NEAR_FOCAL_TOL

    @property
    def normalized_det(self) -> float:
        return abs(self.det) / self.scale if self.scale > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "M": self.M.tolist(),
            "det": self.det,
            "normalized_det": self.normalized_det,
            "verdict": self.verdict,
            "det_tol": self.det_tol,
        }


def classify(det: float, scale: float, focal_tol: float = FOCAL_TOL, near_tol: float = NEAR_FOCAL_TOL) -> str:
    r = abs(det) / scale if scale > 0 else 0.0
    if r <= focal_tol:
        return "focal"
    if r <= near_tol:
        return "near_focal"
    return "non_focal"


def row_scale(M: np.ndarray) -> float:
    """Product of the row max-norms of ``M``."""
    return float(np.prod(np.max(np.abs(M), axis=1)))


def perturbation_basis(weights):
    """Normal momentum direction ``w`` and tangent position directions as columns."""
    w = np.asarray(weights, dtype=float)
    d = w.size
    Z = np.zeros((d, d - 1))
    Z[0, :] = 1.0 / w[0]
    Z[np.arange(1, d), np.arange(d - 1)] = -1.0 / w[1:]
    return w.copy(), Z


def _report(K, M) -> FocalityReport:
    det = float(np.linalg.det(M))
    scale = row_scale(M)
    return FocalityReport(K=float(K), M=M, det=det, scale=scale, verdict=classify(det, scale))


def inverse_flow_jacobian(sys: HamiltonianSystem, x1, p1):
    """Exact ``d x0 / d x1`` and ``d x0 / d p1`` of the closed-form inverse flow."""
    s = sys.spec.vols
    rho = sys.spec.corr
    x1 = np.asarray(x1, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    c = sys.rates(x1, p1)
    x0 = x1 * np.exp(-c)
    G = s[:, None] * rho * s[None, :]
    dx = np.diag(np.exp(-c)) - x0[:, None] * G * p1[None, :]
    dp = -x0[:, None] * G * x1[None, :]
    return dx, dp


def focality_matrix(sys: HamiltonianSystem, candidate: MinimizerCandidate, step: float = 1e-6,
                    method: str = "fd") -> FocalityReport:
    """Matrix of ``x0`` derivatives against terminal perturbations.

    Column 0 is the derivative along the normal momentum perturbation, columns
    1..d-1 along the tangent position perturbations.  ``method="fd"`` uses
    central differences of the inverse flow, ``"analytic"`` its exact Jacobian.
    """
    spec = sys.spec
    d = spec.d
    x1, p1 = candidate.x1, candidate.p1
    q, Z = perturbation_basis(spec.weights)
    K = x1 @ spec.weights
    if method == "analytic":
        dx, dp = inverse_flow_jacobian(sys, x1, p1)
        return _report(K, np.column_stack([dp @ q, dx @ Z]))
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    hq = step * max(1.0, np.max(np.abs(p1)))
    hz = step * max(1.0, np.max(np.abs(x1)))
    X = np.tile(x1, (2 * d, 1))
    P = np.tile(p1, (2 * d, 1))
    P[0] += hq * q
    P[d] -= hq * q
    X[1:d] += hz * Z.T
    X[d + 1:] -= hz * Z.T
    X0, _ = inverse_flow_batch(sys, X, P, 1.0)
    h = np.concatenate([[hq], np.full(d - 1, hz)])
    M = ((X0[:d] - X0[d:]) / (2 * h[:, None])).T
    return _report(K, M)


def analytic_focality_matrix(sys: HamiltonianSystem, x1, p1) -> np.ndarray:
    """Exact matrix for uncorrelated assets, same column layout as :func:`focality_matrix`."""
    spec = sys.spec
    if not spec.is_uncorrelated():
        raise PreconditionError("analytic matrix is implemented for uncorrelated assets")
    x1 = np.asarray(x1, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    s2 = spec.vols**2
    c = s2 * x1 * p1
    a = np.exp(-c) * (1 - c)  # d x0^l / d x1^l
    b = -s2 * x1**2 * np.exp(-c)  # d x0^l / d p1^l
    q, Z = perturbation_basis(spec.weights)
    return np.column_stack([b * q, a[:, None] * Z])


def symmetric_det(d: int, sigma: float, K: float) -> float:
    """Closed-form determinant on the symmetric unit-spot branch."""
    return (-1) ** d * sigma**2 * K * ((1 - np.log(K / d)) * d / K) ** (d - 1)


def branch_candidate(sys: HamiltonianSystem, K: float, seed=None, tol: float = 1e-12) -> MinimizerCandidate:
    """Stationary path continued from the equal-share seed.

    For symmetric baskets this is the symmetric root, which stays a critical
    point of the energy beyond the critical strike even when it stops being
    the minimiser.  Otherwise Newton starts from ``seed`` (default: equal
    shares) and falls back to continuation in the strike from the forward.
    """
    spec = sys.spec
    if spec.is_symmetric():
        return symmetric_closed_form(sys, K)
    p0 = log_ratio_seed(spec, K) if seed is None else np.asarray(seed, dtype=float)
    p, res, ok = newton_shoot(sys, p0, K, tol=tol)
    if not ok:
        p, res, ok = _continuation(sys, K, tol)
    if not ok:
        raise ConvergenceError(f"branch shooting failed at K={K}", best_residual=res)
    return make_candidate(sys, p, K, grid_size=2)


def _continuation(sys, K, tol, n_steps=16):
    spec = sys.spec
    K0 = spec.forward_basket * (1.05 if K > spec.forward_basket else 0.95)
    Ks = np.geomspace(K0, K, n_steps + 1)
    p, res, ok = newton_shoot(sys, log_ratio_seed(spec, K0), K0, tol=tol)
    if not ok:
        return p, res, False
    i, k_prev = 1, K0
    while i < Ks.size:
        pn, res, ok = newton_shoot(sys, p, Ks[i], tol=tol)
        if ok:
            p, k_prev, i = pn, Ks[i], i + 1
            continue
        # refine the remaining path
        mid = np.sqrt(k_prev * Ks[i])
        if abs(mid / k_prev - 1) < 1e-6:
            return p, res, False
        Ks = np.concatenate([Ks[:i], [mid], Ks[i:]])
    return p, res, True


def focality_at(sys: HamiltonianSystem, K: float, step: float = 1e-6, method: str = "fd") -> FocalityReport:
    return focality_matrix(sys, branch_candidate(sys, K), step, method)


def default_bracket(spec):
    F = spec.forward_basket
    return 1.05 * F, 10.0 * F


def critical_strike(sys: HamiltonianSystem, K_lo: float = None, K_hi: float = None, rtol: float = 1e-12,
                    method: str = "analytic") -> float:
    """Strike at which the start point becomes focal along the branch.

    A sign change of ``det M`` over the bracket is located by Brent's method.
    When the vanishing eigenvalue is repeated an even number of times (odd d on
    the symmetric branch) the determinant only touches zero; the root is then
    the minimiser of the normalised smallest singular value, which must reach
    the focal tolerance.  The exact Jacobian is used by default: finite
    difference noise limits the touch-zero minimiser to about 1e-8.
    """
    lo, hi = default_bracket(sys.spec)
    K_lo = lo if K_lo is None else float(K_lo)
    K_hi = hi if K_hi is None else float(K_hi)
    if not 0 < K_lo < K_hi:
        raise BracketError(f"invalid bracket [{K_lo}, {K_hi}]")

    def det(K):
        r = focality_at(sys, K, method=method)
        return r.det / r.scale

    def smin(K):
        # the momentum column carries two extra powers of the spot scale; the
        # tangent columns are scale free and are the ones that vanish
        M = focality_at(sys, K, method=method).M.copy()
        M[:, 0] /= np.linalg.norm(M[:, 0])
        sv = np.linalg.svd(M, compute_uv=False)
        return sv[-1] / sv[0]

    f_lo, f_hi = det(K_lo), det(K_hi)
    grid = np.linspace(K_lo, K_hi, 41)
    if f_lo * f_hi < 0:
        dets = np.array([f_lo] + [det(K) for K in grid[1:-1]] + [f_hi])
        j = int(np.flatnonzero(np.sign(dets[:-1]) * np.sign(dets[1:]) <= 0)[0])
        if dets[j] == 0:
            return float(grid[j])
        return float(brentq(det, grid[j], grid[j + 1], xtol=rtol * grid[j],
                            rtol=4 * np.finfo(float).eps, maxiter=1000))

    # touch-zero case: scan for the smallest value, then golden-section refinement
    vals = np.array([smin(K) for K in grid])
    i = int(np.argmin(vals))
    if i in (0, grid.size - 1):
        raise BracketError(
            f"det M does not change sign on [{K_lo}, {K_hi}] and the smallest singular value "
            f"is minimal at the bracket edge ({vals[i]:.3e})"
        )
    res = minimize_scalar(smin, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                          options={"xtol": rtol, "maxiter": 1000})
    if res.fun > FOCAL_TOL:
        raise BracketError(
            f"det M does not change sign on [{K_lo}, {K_hi}] and the matrix stays regular "
            f"(smallest normalised singular value {res.fun:.3e})"
        )
    return float(res.x)


# -- geometric side -------------------------------------------------------------

def optimal_configuration(sys: HamiltonianSystem, K: float) -> np.ndarray:
    """Chart coordinates of the branch arrival point (closest point for OTM strikes below K*)."""
    return to_chart(sys.spec, branch_candidate(sys, K).x1).x_chart


def focal_offset(sys: HamiltonianSystem, K: float) -> float:
    """Signed position of the nearest focal point along the normal line through the optimal configuration.

    ``<f, N>`` with ``f = x* + N / k`` for the most negative curvature ``k``;
    vanishes exactly when the origin is that focal point.
    """
    spec = sys.spec
    x = optimal_configuration(sys, K)
    q = x[: spec.d - 1]
    W = weingarten(spec, K, q)
    k = W.curvatures[0]
    if k == 0:
        return np.inf
    return float(W.normal @ W.point + 1.0 / k)


def origin_is_focal(sys: HamiltonianSystem, K: float, tol: float = FOCAL_TOL) -> bool:
    """Whether the origin lies in the focal set of the optimal configuration."""
    spec = sys.spec
    x = optimal_configuration(sys, K)
    q = x[: spec.d - 1]
    if spec.d == 2 and spec.is_uncorrelated() and np.all(spec.weights == 1.0):
        f = focal_point_2d(spec, K, x)
        return bool(np.max(np.abs(f)) <= tol * max(1.0, np.max(np.abs(x))))
    W = weingarten(spec, K, q)
    for k in W.curvatures:
        if k != 0:
            f = W.point + W.normal / k
            if np.max(np.abs(f)) <= tol * max(1.0, np.max(np.abs(x))):
                return True
    return False


def focal_crossing_strike(sys: HamiltonianSystem, K_lo: float = None, K_hi: float = None, rtol: float = 1e-12) -> float:
    """Strike at which the nearest focal point of the optimal configuration passes through the origin."""
    lo, hi = default_bracket(sys.spec)
    K_lo = lo if K_lo is None else float(K_lo)
    K_hi = hi if K_hi is None else float(K_hi)
    g = lambda K: focal_offset(sys, K)
    if g(K_lo) * g(K_hi) >= 0:
        raise BracketError(f"focal offset does not change sign on [{K_lo}, {K_hi}]")
    return float(brentq(g, K_lo, K_hi, xtol=rtol * K_lo, rtol=4 * np.finfo(float).eps))


def geometric_vs_hamiltonian_check(sys: HamiltonianSystem, K: float) -> bool:
    """Focal verdicts of the flow matrix and of the chart geometry coincide."""
    spec = sys.spec
    if spec.d != 2 or not spec.is_uncorrelated():
        raise PreconditionError("geometric cross-check is set up for two uncorrelated assets")
    return (focality_at(sys, K).verdict == "focal") == origin_is_focal(sys, K)

