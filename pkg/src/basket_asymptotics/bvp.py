"""Shooting for the arrival-manifold boundary value problem.

Unknown: the initial momentum ``p0``.  Starting from the spots, the closed-form
flow is run to ``t = 1`` and two kinds of conditions are imposed there:

* arrival on the strike surface, ``sum_l w_l x^l(1) = K``;
* transversality, ``p(1)`` parallel to ``w``.

Every root is a candidate most-likely path; those with minimal energy
``H(x0, p0)`` define the rate function ``Lambda(K)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import ConvergenceError, DomainError, PreconditionError
from .hamiltonian import (
    ControlPath,
    HamiltonianSystem,
    PhaseState,
    control_from_trajectory,
    flow_batch,
    hamiltonian_value,
)

DEDUP_TOL = 1e-6
TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MinimizerCandidate:
    p0: np.ndarray
    terminal: PhaseState
    control: ControlPath
    energy: float
    residual: float

    @property
    def x1(self) -> np.ndarray:
        return self.terminal.x

    @property
    def p1(self) -> np.ndarray:
        return self.terminal.p

    def to_dict(self) -> dict:
        return {
            "p0": self.p0.tolist(),
            "x1": self.x1.tolist(),
            "energy": self.energy,
            "residual": self.residual,
        }


@dataclass(frozen=True, eq=False)
class EnergySolution:
    K: float
    lam: float
    candidates: List[MinimizerCandidate]
    roots: List[MinimizerCandidate] = field(repr=False)

    @property
    def n_solutions_found(self) -> int:
        return len(self.roots)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "lambda": self.lam,
            "n_solutions_found": self.n_solutions_found,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def residual_batch(sys: HamiltonianSystem, P0: np.ndarray, K: float) -> np.ndarray:
    spec = sys.spec
    P0 = np.atleast_2d(P0)
    X0 = np.broadcast_to(spec.spots, P0.shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        X1, P1 = flow_batch(sys, X0, P0, 1.0)
        q = P1 / spec.weights
        out = np.empty_like(P0)
        out[:, 0] = X1 @ spec.weights - K
        out[:, 1:] = q[:, :1] - q[:, 1:]
    return out


def boundary_residual(sys: HamiltonianSystem, p0, K: float) -> np.ndarray:
    """Arrival defect ``w.x(1) - K`` followed by ``p^1(1)/w_1 - p^l(1)/w_l``, ``l >= 2``."""
    if not K > 0:
        raise DomainError("strike must be positive")
    return residual_batch(sys, np.asarray(p0, dtype=float), K)[0]


def _jacobian(sys, p, K):
    d = p.size
    h = 1e-7 * (1.0 + np.abs(p))
    E = np.diag(h)
    R = residual_batch(sys, np.vstack([p + E, p - E]), K)
    return ((R[:d] - R[d:]) / (2 * h[:, None])).T


def newton_shoot(sys: HamiltonianSystem, p0, K: float, tol: float = 1e-10, max_iter: int = 80):
    """Damped Newton on the boundary residual.

    Returns ``(p0, residual_max_norm, converged)``.
    """
    p = np.array(p0, dtype=float)
    r = residual_batch(sys, p, K)[0]
    if not np.all(np.isfinite(r)):
        return p, np.inf, False
    nr = np.linalg.norm(r)
    polish = 0
    for _ in range(max_iter):
        J = _jacobian(sys, p, K)
        if not np.all(np.isfinite(J)):
            break
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while True:
            pn = p + t * step
            rn = residual_batch(sys, pn, K)[0]
            nrn = np.linalg.norm(rn)
            if np.all(np.isfinite(rn)) and nrn <= (1 - 1e-4 * t) * nr:
                break
            t *= 0.5
            if t < 1e-6:
                break
        if t < 1e-6:
            # no descent: either at machine precision or stuck
            break
        p, r, nr = pn, rn, nrn
        if np.max(np.abs(r)) <= tol:
            polish += 1
            if polish > 2 or np.max(np.abs(t * step)) <= 1e-15 * (1 + np.max(np.abs(p))):
                break
    res = float(np.max(np.abs(r)))
    return p, res, res <= tol


def make_candidate(sys: HamiltonianSystem, p0, K: float, grid_size: int = 101) -> MinimizerCandidate:
    spec = sys.spec
    p0 = np.asarray(p0, dtype=float)
    x1, p1 = flow_batch(sys, spec.spots[None, :], p0[None, :], 1.0)
    start = PhaseState(spec.spots, p0, 0.0)
    return MinimizerCandidate(
        p0=p0,
        terminal=PhaseState(x1[0], p1[0], 1.0),
        control=control_from_trajectory(sys, start, grid_size),
        energy=hamiltonian_value(sys, spec.spots, p0),
        residual=float(np.max(np.abs(boundary_residual(sys, p0, K)))),
    )


def log_ratio_seed(spec, K: float) -> np.ndarray:
    """Initial momentum sending each asset to an equal share of ``K`` (exact when symmetric)."""
    share = K / (spec.d * spec.weights * spec.spots)
    return np.log(share) / (spec.vols**2 * spec.spots)


def arrival_seed(spec, K: float) -> np.ndarray:
    """Initial momentum of the cheapest arrival point.

    ``x p`` is conserved along the flow, so ``log(x(1)/x0) = G (x0 p0)`` with
    ``G = diag(sigma) corr diag(sigma)`` and the energy is ``y.G^-1 y / 2``
    for ``y = log(x(1)/x0)``.  Minimising it on ``w.x0 e^y = K`` locates the
    root of lowest energy reachable from the equal-share point.
    """
    G = spec.vols[:, None] * spec.corr * spec.vols[None, :]
    a = spec.weights * spec.spots
    y0 = np.log(K / (spec.d * a))
    res = minimize(
        lambda y: 0.5 * y @ np.linalg.solve(G, y),
        y0,
        jac=lambda y: np.linalg.solve(G, y),
        constraints={"type": "eq", "fun": lambda y: np.log(a @ np.exp(y) / K),
                     "jac": lambda y: a * np.exp(y) / (a @ np.exp(y))},
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 200},
    )
    y = res.x if np.all(np.isfinite(res.x)) else y0
    return np.linalg.solve(G, y) / spec.spots


def search_radius(spec, K: float) -> float:
    share = K / (spec.d * spec.weights * spec.spots)
    return (4 * np.max(np.abs(np.log(share))) / np.min(spec.vols) ** 2 + 1) / np.min(spec.spots)


def _same_root(sys, a: MinimizerCandidate, b: MinimizerCandidate, K: float, tol: float) -> bool:
    """Two converged starts found the same root.

    Close momenta always match.  Near a degenerate root Newton converges only
    linearly, so copies can sit further apart; tied energies with a midpoint
    that is itself a root are merged as well.
    """
    if np.max(np.abs(a.p0 - b.p0)) <= DEDUP_TOL * (1 + np.max(np.abs(b.p0))):
        return True
    if abs(a.energy - b.energy) > TIE_TOL:
        return False
    mid = residual_batch(sys, 0.5 * (a.p0 + b.p0), K)[0]
    return bool(np.max(np.abs(mid)) <= 10 * tol)


def solve_bvp(
    sys: HamiltonianSystem,
    K: float,
    multistart: int = 16,
    tol: float = 1e-10,
    seeds: Optional[np.ndarray] = None,
) -> EnergySolution:
    """Multistart shooting; returns all distinct roots and the minimal-energy ones."""
    if not K > 0:
        raise DomainError("strike must be positive")
    if multistart < 1:
        raise DomainError("multistart must be at least 1")
    spec = sys.spec
    d = spec.d
    P = search_radius(spec, K)
    halton = qmc.Halton(d, scramble=False).random(multistart)
    starts = [log_ratio_seed(spec, K), arrival_seed(spec, K)]
    if seeds is not None:
        starts.extend(np.atleast_2d(seeds))
    starts.extend(P * (2 * halton - 1))

    found = []
    best = np.inf
    for s in starts:
        p, res, ok = newton_shoot(sys, s, K, tol)
        best = min(best, res)
        if ok:
            found.append(p)
    if not found:
        raise ConvergenceError(f"no boundary-value root found for K={K}", best_residual=best)

    cands = [make_candidate(sys, p, K) for p in found]
    cands.sort(key=lambda c: (round(c.energy, 12), tuple(c.p0)))
    roots: List[MinimizerCandidate] = []
    for c in cands:
        if not any(_same_root(sys, c, r, K, tol) for r in roots):
            roots.append(c)
    lam = min(r.energy for r in roots)
    minimal = [r for r in roots if r.energy - lam <= TIE_TOL]
    return EnergySolution(K=float(K), lam=lam, candidates=minimal, roots=roots)


def symmetric_closed_form(sys: HamiltonianSystem, K: float) -> MinimizerCandidate:
    """Symmetric root for equal spots, vols and weights with uncorrelated assets.

    Each asset ends at ``K / (d w)``; with unit spots and weights
    ``p0 = log(K/d) / sigma^2`` and ``p1 = d log(K/d) / (sigma^2 K)``.
    """
    spec = sys.spec
    if not spec.is_symmetric():
        raise PreconditionError("closed form needs equal spots, vols, weights and identity correlation")
    if not K > 0:
        raise DomainError("strike must be positive")
    s, sig, w, d = spec.spots[0], spec.vols[0], spec.weights[0], spec.d
    end = K / (d * w)
    p0 = np.full(d, np.log(end / s) / (sig**2 * s))
    p1 = p0 * s / end
    start = PhaseState(spec.spots, p0, 0.0)
    return MinimizerCandidate(
        p0=p0,
        terminal=PhaseState(np.full(d, end), p1, 1.0),
        control=control_from_trajectory(sys, start),
        energy=0.5 * d * np.log(end / s) ** 2 / sig**2,
        residual=float(np.max(np.abs(boundary_residual(sys, p0, K)))),
    )
