"""Extrinsic geometry of the strike surface in the Euclidean chart.

The strike surface ``F = {S > 0 : sum_i w_i S^i = K}`` is written as a graph
over the first ``d - 1`` chart coordinates ``q``; the last coordinate is solved
for explicitly.  Focal points of ``F`` sit at ``p + N(p) / k_i(p)`` for the
principal curvatures ``k_i``.  With the unit normal oriented towards larger
basket values the curvatures are negative and focal points lie on the
in-the-money side.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import DomainError, PreconditionError
from .model import BasketSpec, from_chart

CURVATURE_EPS = 1e-14


def _partial_prices(spec: BasketSpec, q):
    """Weighted prices of the first d-1 assets on the graph, and the remaining room ``K - sum``."""
    d = spec.d
    L = spec.chol
    y = L[: d - 1, : d - 1] @ q
    return spec.weights[: d - 1] * spec.spots[: d - 1] * np.exp(spec.vols[: d - 1] * y)


def strike_surface(spec: BasketSpec, K: float, q) -> np.ndarray:
    """Chart point ``phi(q)`` on the strike surface whose first d-1 coordinates are ``q``."""
    d = spec.d
    if d < 2:
        raise PreconditionError("the strike surface is a point for a single asset")
    q = np.asarray(q, dtype=float).reshape(d - 1)
    L = spec.chol
    room = K - _partial_prices(spec, q).sum()
    if not room > 0:
        raise DomainError(f"q={q} lies outside the parameter domain: last asset price would be {room:.3e}")
    y_last = np.log(room / (spec.weights[-1] * spec.spots[-1])) / spec.vols[-1]
    x_last = (y_last - L[d - 1, : d - 1] @ q) / L[d - 1, d - 1]
    return np.append(q, x_last)


def tangent_basis(spec: BasketSpec, K: float, q) -> np.ndarray:
    """Columns are ``e_i = d phi / d q^i`` (shape d x (d-1))."""
    d = spec.d
    q = np.asarray(q, dtype=float).reshape(d - 1)
    L = spec.chol
    wS = _partial_prices(spec, q)
    room = K - wS.sum()
    if not room > 0:
        raise DomainError(f"q={q} lies outside the parameter domain")
    # d y^j / d q^i = L_ji for j < d
    dsum = (spec.vols[: d - 1] * wS) @ L[: d - 1, : d - 1]
    last = -(dsum / (spec.vols[-1] * room) + L[d - 1, : d - 1]) / L[d - 1, d - 1]
    return np.vstack([np.eye(d - 1), last])


def unit_normal(spec: BasketSpec, K: float, q) -> np.ndarray:
    """Unit normal at ``phi(q)``, oriented so that ``<N, (1, ..., 1)> > 0``."""
    x = strike_surface(spec, K, q)
    S = from_chart(spec, x)
    g = spec.chol.T @ (spec.weights * spec.vols * S)
    n = g / np.linalg.norm(g)
    return -n if n.sum() < 0 else n


@dataclass(frozen=True, eq=False)
class WeingartenMap:
    """Shape operator at ``phi(q)`` in the tangent basis ``e_i``.

    ``shape`` satisfies ``L(e_j) = sum_i shape[i, j] e_i``; ``second_form`` is
    ``-<d N / d q^j, e_i>`` and ``first_form`` is ``<e_i, e_j>``.
    """

    point: np.ndarray
    normal: np.ndarray
    tangents: np.ndarray
    first_form: np.ndarray
    second_form: np.ndarray
    shape: np.ndarray
    curvatures: np.ndarray


def weingarten(spec: BasketSpec, K: float, q, step: float = 1e-6) -> WeingartenMap:
    d = spec.d
    q = np.asarray(q, dtype=float).reshape(d - 1)
    E = tangent_basis(spec, K, q)
    dN = np.empty((d, d - 1))
    for j in range(d - 1):
        h = step * max(1.0, abs(q[j]))
        dq = np.zeros(d - 1)
        dq[j] = h
        dN[:, j] = (unit_normal(spec, K, q + dq) - unit_normal(spec, K, q - dq)) / (2 * h)
    G = E.T @ E
    II = -E.T @ dN
    II = 0.5 * (II + II.T)
    shape = np.linalg.solve(G, II)
    # G^{-1} II is self-adjoint for the first fundamental form, so its spectrum is real
    curv = np.sort(np.linalg.eigvals(shape).real)
    return WeingartenMap(
        point=strike_surface(spec, K, q),
        normal=unit_normal(spec, K, q),
        tangents=E,
        first_form=G,
        second_form=II,
        shape=shape,
        curvatures=curv,
    )


@dataclass(frozen=True, eq=False)
class FocalPoint:
    p_surface: np.ndarray
    f: np.ndarray
    curvature: float


def focal_points(spec: BasketSpec, K: float, q, step: float = 1e-6) -> List[FocalPoint]:
    """Focal points ``p + N / k_i`` for every nonzero principal curvature."""
    W = weingarten(spec, K, q, step)
    return [
        FocalPoint(p_surface=W.point, f=W.point + W.normal / k, curvature=float(k))
        for k in W.curvatures
        if abs(k) > CURVATURE_EPS
    ]


# -- closed forms for two uncorrelated assets ----------------------------------

def _require_2d_uncorrelated(spec: BasketSpec):
    if spec.d != 2 or not spec.is_uncorrelated():
        raise PreconditionError("closed form is for two uncorrelated assets")
    if not np.all(spec.weights == 1.0):
        raise PreconditionError("closed form assumes unit weights")


def curvature_2d(spec: BasketSpec, K: float, q1: float) -> float:
    """Signed curvature of the strike curve at ``phi(q1)`` for two uncorrelated assets."""
    _require_2d_uncorrelated(spec)
    s1, s2 = spec.vols
    S1 = spec.spots[0] * np.exp(s1 * q1)
    num = K * s1**2 * s2**2 * S1 * (S1 - K)
    den = (s1**2 * S1**2 + s2**2 * (S1 - K) ** 2) ** 1.5
    return num / den


def focal_point_2d(spec: BasketSpec, K: float, x) -> np.ndarray:
    """Focal point attached to the surface point ``x`` (chart coordinates), two uncorrelated assets."""
    _require_2d_uncorrelated(spec)
    s1, s2 = spec.vols
    x = np.asarray(x, dtype=float)
    S1, S2 = spec.spots * np.exp(spec.vols * x)
    common = S1 * (2 * s2**2 * K - (s1**2 + s2**2) * S1) - s2**2 * K**2
    return np.array([
        x[0] + common / (s1 * s2**2 * K * S2),
        x[1] + common / (s1**2 * s2 * K * S1),
    ])
