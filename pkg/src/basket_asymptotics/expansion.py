"""Density expansions of the basket value.

Short time:   f_T(K) ~ c0 T^power exp(-Lambda(K) / T)
Small noise:  f_eps(K) ~ c0 eps^{-1} exp(-Lambda(K) / eps^2) exp(c2 / eps)

``Lambda`` is the minimal energy of the arrival problem.  ``c2`` is
``Lambda'(K) * Yhat_1`` maximised over minimisers, where ``Yhat`` is the basket
projection of the first-order correction of the controlled path in the noise
level.  The power is -1/2 for a non-focal start point and -3/4 for the
symmetric two-asset degeneracy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bvp import EnergySolution, MinimizerCandidate, solve_bvp
from .errors import DomainError
from .focality import VERDICTS, focality_matrix
from .hamiltonian import HamiltonianSystem, integrate, local_tolerance
from .oracle import QUARTIC_CONSTANT, exact_density, log_convolution_density

GENERIC_POWER = -0.5
DEGENERATE_POWER = -0.75


@dataclass(frozen=True, eq=False)
class ExpansionResult:
    """One evaluated expansion.

    ``power`` is ``None`` when the regime is degenerate but no law is known.
    ``f_asymptotic`` needs the leading constant and is ``None`` without it;
    ``log_shape`` is always available and omits the constant.
    """

    K: float
    scale: float
    scale_kind: str  # "T" or "eps"
    lam: float
    c2: float
    power: Optional[float]
    regime: str
    verdict: str
    c0: Optional[float] = None
    low_confidence: bool = False
    alt_power: Optional[float] = None
    n_minimizers: int = 1

    @property
    def log_shape(self) -> float:
        p = 0.0 if self.power is None else self.power
        s = self.scale
        if self.scale_kind == "T":
            return p * np.log(s) - self.lam / s
        return p * np.log(s) - self.lam / s**2 + self.c2 / s

    @property
    def f_asymptotic(self) -> Optional[float]:
        if self.c0 is None or self.power is None:
            return None
        return float(self.c0 * np.exp(self.log_shape))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            self.scale_kind: self.scale,
            "lambda": self.lam,
            "c2": self.c2,
            "power": self.power,
            "regime": self.regime,
            "verdict": self.verdict,
            "c0": self.c0,
            "low_confidence": self.low_confidence,
            "alt_power": self.alt_power,
            "n_minimizers": self.n_minimizers,
            "f_asymptotic": self.f_asymptotic,
        }


def _worst_verdict(sys, candidates):
    reports = [focality_matrix(sys, c) for c in candidates]
    return max((r.verdict for r in reports), key=VERDICTS.index)


def _is_unit_pair(spec) -> bool:
    return (spec.d == 2 and spec.is_symmetric() and spec.spots[0] == 1.0
            and spec.vols[0] == 1.0 and spec.weights[0] == 1.0)


def _regime(spec, verdict):
    """Power, alternative power, regime and confidence flag for a focality verdict."""
    known = spec.d == 2 and spec.is_symmetric()
    if verdict == "focal":
        return (DEGENERATE_POWER if known else None), None, "degenerate", False
    if verdict == "near_focal":
        return GENERIC_POWER, (DEGENERATE_POWER if known else None), "generic", True
    return GENERIC_POWER, None, "generic", False


def short_time_density(sys: HamiltonianSystem, K: float, T: float, c0: Optional[float] = None,
                       solution: Optional[EnergySolution] = None) -> ExpansionResult:
    """Leading-order short-time density of the basket.

    ``c0`` may be passed in (for instance from :func:`estimate_prefactor`);
    otherwise it is only filled for the degenerate unit two-asset case, where
    it is known in closed form.
    """
    if not T > 0:
        raise DomainError("maturity must be positive")
    sol = solution if solution is not None else solve_bvp(sys, K)
    verdict = _worst_verdict(sys, sol.candidates)
    power, alt, regime, low = _regime(sys.spec, verdict)
    if c0 is None and regime == "degenerate" and _is_unit_pair(sys.spec):
        c0 = float(QUARTIC_CONSTANT)
    return ExpansionResult(K=float(K), scale=float(T), scale_kind="T", lam=sol.lam, c2=0.0, power=power,
                           regime=regime, verdict=verdict, c0=c0, low_confidence=low, alt_power=alt,
                           n_minimizers=len(sol.candidates))


def estimate_prefactor(sys: HamiltonianSystem, K: float, T: float, power: float = GENERIC_POWER,
                       lam: Optional[float] = None) -> float:
    """Empirical leading constant ``f_oracle / (T^power exp(-Lambda/T))`` at a small ``T``."""
    spec = sys.spec
    if lam is None:
        lam = solve_bvp(sys, K).lam
    if spec.d == 2 and spec.is_uncorrelated():
        logf = log_convolution_density(spec, K, T)
    else:
        logf = np.log(exact_density(spec, K, T))
    return float(np.exp(logf - power * np.log(T) + lam / T))


# -- second order ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SecondOrderODE:
    times: np.ndarray
    trajectory: np.ndarray  # (n, d) controlled path phi_t
    xhat: np.ndarray  # (n, d)
    weights: np.ndarray

    @property
    def yhat(self) -> np.ndarray:
        """Basket projection ``w . Xhat_t`` along the grid."""
        return self.xhat @ self.weights

    @property
    def yhat_1(self) -> float:
        return float(self.yhat[-1])


def xhat_solve(sys: HamiltonianSystem, candidate: MinimizerCandidate, xhat0=None, tol: float = 1e-12,
               grid_size: int = 101) -> SecondOrderODE:
    """Integrate ``dXhat = (d_x b(0, phi) + d_x sigma(phi) . h0') Xhat dt + d_eps b(0, phi) dt``.

    The order-one drift vanishes, ``sigma(x) = diag(vols x) L`` and the drift
    derivative in the noise level is ``rate * x`` when ``drift_mode="scaled_rate"``.
    The path and ``Xhat`` are integrated jointly by the adaptive Runge-Kutta scheme.
    """
    spec = sys.spec
    d = spec.d
    xhat0 = np.zeros(d) if xhat0 is None else np.asarray(xhat0, dtype=float)
    r = sys.eps_drift_rate
    s, L = spec.vols, spec.chol

    def rhs(_, y):
        x, p, xh = y[:d], y[d:2 * d], y[2 * d:]
        dx, dp = sys.vector_field(x, p)
        hdot = L.T @ (s * x * p)
        dxh = s * (L @ hdot) * xh + r * x
        return np.concatenate([dx, dp, dxh])

    times = np.linspace(0.0, 1.0, grid_size)
    y0 = np.concatenate([spec.spots, candidate.p0, xhat0])
    sol = integrate(rhs, y0, (0.0, 1.0), local_tolerance(tol), t_eval=times)
    Y = sol.y.T
    return SecondOrderODE(times=times, trajectory=Y[:, :d], xhat=Y[:, 2 * d:], weights=spec.weights.copy())


def xhat_closed_form(sys: HamiltonianSystem, candidate: MinimizerCandidate, t, xhat0=None) -> np.ndarray:
    """Exact ``Xhat_t = exp(c t) (xhat0 + rate x0 t)`` with the constant log growth rates ``c``."""
    spec = sys.spec
    xhat0 = np.zeros(spec.d) if xhat0 is None else np.asarray(xhat0, dtype=float)
    c = sys.rates(spec.spots, candidate.p0)
    t = np.asarray(t, dtype=float)[..., None]
    return np.exp(c * t) * (xhat0 + sys.eps_drift_rate * spec.spots * t)


def lambda_prime(sys: HamiltonianSystem, K: float, step: Optional[float] = None) -> float:
    """Derivative of the rate function in the strike.

    Closed form on the symmetric branch while it is minimal, ``d log(K/(d w s)) / (sigma^2 K)``;
    central differences of the shooting energy with step ``1e-4 K`` otherwise.
    """
    spec = sys.spec
    if spec.is_symmetric():
        d, s, w, sig = spec.d, spec.spots[0], spec.weights[0], spec.vols[0]
        if K <= d * w * s * np.e:
            return float(d * np.log(K / (d * w * s)) / (sig**2 * K))
    h = 1e-4 * K if step is None else step
    return float((solve_bvp(sys, K + h).lam - solve_bvp(sys, K - h).lam) / (2 * h))


def lagrange_multiplier(sys: HamiltonianSystem, candidate: MinimizerCandidate) -> float:
    """Terminal momentum per unit weight, ``p1 / w``; equals ``Lambda'(K)`` at a minimiser."""
    return float(np.mean(candidate.p1 / sys.spec.weights))


def small_noise_density(sys: HamiltonianSystem, K: float, eps: float, tol: float = 1e-12,
                        solution: Optional[EnergySolution] = None) -> ExpansionResult:
    """Small-noise density at unit time with second-order exponential term ``c2``."""
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    sol = solution if solution is not None else solve_bvp(sys, K)
    dlam = lambda_prime(sys, K)
    c2 = max(dlam * xhat_solve(sys, c, tol=tol).yhat_1 for c in sol.candidates)
    verdict = _worst_verdict(sys, sol.candidates)
    _, alt, regime, low = _regime(sys.spec, verdict)
    power = -1.0 if regime == "generic" else None
    return ExpansionResult(K=float(K), scale=float(eps), scale_kind="eps", lam=sol.lam, c2=float(c2),
                           power=power, regime=regime, verdict=verdict, low_confidence=low,
                           alt_power=None if alt is None else -1.0, n_minimizers=len(sol.candidates))


# -- regressions against reference densities ---------------------------------------

def fit_exponent(Ts, logf, free_power: bool = True) -> dict:
    """Least squares fit of ``log f = a + b / T (+ p log T)``.

    Returns the coefficient of ``1/T`` (``-Lambda``), the power (when free) and the intercept.
    """
    Ts = np.asarray(Ts, dtype=float)
    cols = [np.ones_like(Ts), 1 / Ts] + ([np.log(Ts)] if free_power else [])
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.asarray(logf, dtype=float), rcond=None)
    return {"intercept": float(coef[0]), "slope": float(coef[1]),
            "power": float(coef[2]) if free_power else None}


def fit_power(Ts, logf, lam: float) -> float:
    """Slope of ``log f + lam / T`` against ``log T``."""
    Ts = np.asarray(Ts, dtype=float)
    y = np.asarray(logf, dtype=float) + lam / Ts
    return float(np.polyfit(np.log(Ts), y, 1)[0])
