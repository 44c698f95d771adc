"""Hamiltonian dynamics of the multivariate Black-Scholes skeleton.

For ``sigma(x) = diag(sigma^i x^i) L`` (``L L^T = corr``) and no order-one drift,

    H(x, p) = 1/2 <p, sigma(x) sigma(x)^T p> = 1/2 sum_ij rho_ij (s^i x^i p^i)(s^j x^j p^j).

Every product ``x^l p^l`` is conserved, so the flow is an explicit exponential.
A generic adaptive integrator is kept alongside for dynamics without a closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, StiffnessError
from .model import BasketSpec

DRIFT_MODES = ("zero", "scaled_rate")
RK_TOL_FLOOR = 2.5e-14


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """Hamiltonian of a basket model.

    ``drift_mode="scaled_rate"`` models a drift ``eps * rate * x`` that vanishes
    with the noise level; it leaves the Hamiltonian unchanged and only enters
    the second-order correction through ``d_eps b(0, x) = rate * x``.
    """

    spec: BasketSpec
    drift_mode: str = "zero"

    def __post_init__(self):
        if self.drift_mode not in DRIFT_MODES:
            raise ValueError(f"drift_mode must be one of {DRIFT_MODES}, got {self.drift_mode!r}")

    @property
    def eps_drift_rate(self) -> float:
        return self.spec.rate if self.drift_mode == "scaled_rate" else 0.0

    def diffusion_matrix(self, x) -> np.ndarray:
        """``sigma(x)`` as a d x m matrix acting on independent Brownian motions."""
        x = np.asarray(x, dtype=float)
        return (self.spec.vols * x)[:, None] * self.spec.chol

    def rates(self, x, p) -> np.ndarray:
        """Per-asset log growth rates ``sigma^l sum_i rho_li sigma^i x^i p^i``.

        Works on single states or on stacks of states (last axis = asset).
        """
        s = self.spec.vols
        return s * ((s * np.asarray(x) * np.asarray(p)) @ self.spec.corr.T)

    def vector_field(self, x, p):
        c = self.rates(x, p)
        return c * x, -c * p


@dataclass(frozen=True, eq=False)
class PhaseState:
    x: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Minimizing control derivative ``h0'(t)`` sampled on a uniform grid of [0, 1]."""

    times: np.ndarray
    values: np.ndarray  # (n_times, m)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def energy(self) -> float:
        """``1/2 ||h0||_H^2`` by the trapezoidal rule."""
        sq = np.sum(self.values**2, axis=1)
        return 0.5 * float(np.sum(0.5 * (sq[1:] + sq[:-1]) * np.diff(self.times)))


def hamiltonian_value(sys: HamiltonianSystem, x, p) -> float:
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != (sys.spec.d,) or p.shape != (sys.spec.d,):
        raise DomainError(f"state dimensions {x.shape}, {p.shape} do not match d={sys.spec.d}")
    v = sys.spec.vols * x * p
    return 0.5 * float(v @ sys.spec.corr @ v)


def _check_positive(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("Black-Scholes positions must be strictly positive")


def flow(sys: HamiltonianSystem, state0: PhaseState, t: float) -> PhaseState:
    """Closed-form forward flow ``H_{t0+t <- t0}``."""
    _check_positive(state0.x)
    c = sys.rates(state0.x, state0.p)
    g = np.exp(c * t)
    return PhaseState(state0.x * g, state0.p / g, state0.t + t)


def inverse_flow(sys: HamiltonianSystem, stateT: PhaseState, t: float) -> PhaseState:
    """Closed-form backward flow from terminal data, ``H_{T-t <- T}``."""
    _check_positive(stateT.x)
    c = sys.rates(stateT.x, stateT.p)
    g = np.exp(-c * t)
    return PhaseState(stateT.x * g, stateT.p / g, stateT.t - t)


def flow_batch(sys: HamiltonianSystem, X0: np.ndarray, P0: np.ndarray, t: float):
    """Vectorised closed-form flow for stacks of states (rows)."""
    c = sys.rates(X0, P0)
    g = np.exp(c * t)
    return X0 * g, P0 / g


def inverse_flow_batch(sys: HamiltonianSystem, XT: np.ndarray, PT: np.ndarray, t: float):
    c = sys.rates(XT, PT)
    g = np.exp(-c * t)
    return XT * g, PT / g


def integrate(rhs, y0, t_span, tol: float, t_eval=None):
    """Dormand-Prince 5(4) with relative and absolute tolerance ``tol``.

    Returns the ``solve_ivp`` result; raises :class:`StiffnessError` when the
    step size underflows.
    """
    sol = solve_ivp(rhs, t_span, np.asarray(y0, dtype=float), method="RK45",
                    rtol=max(tol, RK_TOL_FLOOR), atol=tol, t_eval=t_eval)
    if sol.status != 0:
        last = float(sol.t[-1]) if sol.t.size else float(t_span[0])
        raise StiffnessError(f"integration failed at t={last}: {sol.message}", last_time=last)
    return sol


def local_tolerance(tol: float) -> float:
    """Step tolerance that keeps the scaled global error of a unit-time solve below ``10 * tol``."""
    if not 1e-13 <= tol <= 1e-6:
        raise DomainError(f"integrator tolerance must lie in [1e-13, 1e-6], got {tol}")
    return max(tol * 1e-2, RK_TOL_FLOOR)


def flow_numeric(sys: HamiltonianSystem, state0: PhaseState, t: float, tol: float = 1e-10) -> PhaseState:
    """Hamiltonian flow by adaptive Runge-Kutta integration of the canonical equations.

    The error, measured in max norm relative to ``max(1, |state|)``, stays
    within ``10 * tol`` for unit-order times.
    """
    d = sys.spec.d
    step_tol = local_tolerance(tol)
    if not np.any(state0.p):
        return PhaseState(state0.x.copy(), state0.p.copy(), state0.t + t)

    def rhs(_, y):
        dx, dp = sys.vector_field(y[:d], y[d:])
        return np.concatenate([dx, dp])

    sol = integrate(rhs, np.concatenate([state0.x, state0.p]), (0.0, t), step_tol)
    y = sol.y[:, -1]
    return PhaseState(y[:d], y[d:], state0.t + t)


def control_from_trajectory(sys: HamiltonianSystem, state0: PhaseState, grid_size: int = 101) -> ControlPath:
    """Control ``h0'(t)_j = <sigma_j(x(t)), p(t)>`` along the flow from ``state0``."""
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    times = np.linspace(0.0, 1.0, grid_size)
    c = sys.rates(state0.x, state0.p)
    g = np.exp(np.outer(times, c))
    X = state0.x * g
    P = state0.p / g
    # sigma(x)^T p = L^T (s * x * p), row by row
    values = (sys.spec.vols * X * P) @ sys.spec.chol
    return ControlPath(times=times, values=values)
