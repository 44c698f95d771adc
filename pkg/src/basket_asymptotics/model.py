"""Basket parameters, correlation algebra and the Euclidean chart.

Prices ``S`` are mapped to log coordinates ``y = log(S / S0) / sigma`` and then
whitened with the Cholesky factor ``L`` of the correlation matrix,
``x = L^{-1} y``.  In the whitened chart the Black-Scholes metric is Euclidean,
so minimal energies are half squared distances and geodesics are straight lines.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DefinitenessError, DomainError

MIN_CORR_EIGENVALUE = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def cholesky_lower(corr, tol: float = MIN_CORR_EIGENVALUE) -> np.ndarray:
    """Lower Cholesky factor of a correlation matrix.

    Raises :class:`DefinitenessError` naming the first leading principal minor
    whose smallest eigenvalue does not exceed ``tol``.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise DefinitenessError(f"correlation matrix must be square, got shape {corr.shape}")
    if not np.allclose(corr, corr.T, rtol=0, atol=1e-12):
        raise DefinitenessError("correlation matrix is not symmetric")
    d = corr.shape[0]
    for k in range(1, d + 1):
        lam = np.linalg.eigvalsh(corr[:k, :k])[0]
        if lam <= tol:
            raise DefinitenessError(
                f"correlation matrix is not positive definite: leading minor of order {k} "
                f"has smallest eigenvalue {lam:.3e}",
                minor=k,
            )
    return np.linalg.cholesky(corr)


@dataclass(frozen=True, eq=False)
class BasketSpec:
    """Multivariate Black-Scholes model and basket weights.

    ``B_T = sum_i weights[i] * S^i_T`` with ``dS^i = rate S^i dt + vols[i] S^i dW^i``
    and ``d<W^i, W^j> = corr[i, j] dt``.  ``maturity`` is carried as metadata
    (the asymptotic analysis itself works at unit time).
    """

    spots: np.ndarray
    vols: np.ndarray
    corr: np.ndarray
    rate: float = 0.0
    weights: Optional[np.ndarray] = None
    maturity: float = 1.0
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        spots = _frozen(self.spots).reshape(-1)
        d = spots.size
        vols = _frozen(self.vols).reshape(-1)
        corr = np.array(self.corr, dtype=float)
        if corr.ndim == 0:
            corr = corr.reshape(1, 1)
        weights = np.ones(d) if self.weights is None else np.array(self.weights, dtype=float).reshape(-1)
        if d < 1:
            raise DomainError("a basket needs at least one asset")
        if vols.size != d or weights.size != d or corr.shape != (d, d):
            raise DomainError(
                f"inconsistent dimensions: spots {d}, vols {vols.size}, "
                f"weights {weights.size}, corr {corr.shape}"
            )
        if np.any(spots <= 0) or not np.all(np.isfinite(spots)):
            raise DomainError("spots must be strictly positive")
        if np.any(vols <= 0) or not np.all(np.isfinite(vols)):
            raise DomainError("vols must be strictly positive")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise DomainError("weights must be strictly positive")
        if not np.allclose(np.diag(corr), 1.0, rtol=0, atol=1e-12):
            raise DefinitenessError("correlation matrix must have unit diagonal")
        if not self.maturity > 0:
            raise DomainError("maturity must be positive")
        chol = cholesky_lower(corr)
        object.__setattr__(self, "spots", spots)
        object.__setattr__(self, "vols", vols)
        object.__setattr__(self, "corr", _frozen(corr))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "maturity", float(self.maturity))
        object.__setattr__(self, "chol", _frozen(chol))

    def __eq__(self, other):
        if not isinstance(other, BasketSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = object.__hash__

    @property
    def d(self) -> int:
        return self.spots.size

    @property
    def forward_basket(self) -> float:
        """Basket value at the spot, ``sum w_i S0^i``."""
        return float(self.weights @ self.spots)

    def is_symmetric(self) -> bool:
        """Equal spots, vols and weights with uncorrelated assets."""
        return bool(
            np.all(self.spots == self.spots[0])
            and np.all(self.vols == self.vols[0])
            and np.all(self.weights == self.weights[0])
            and np.array_equal(self.corr, np.eye(self.d))
        )

    def is_uncorrelated(self) -> bool:
        return bool(np.array_equal(self.corr, np.eye(self.d)))

    @classmethod
    def symmetric(cls, d: int, spot: float = 1.0, vol: float = 1.0, rate: float = 0.0, **kw) -> "BasketSpec":
        return cls(np.full(d, spot), np.full(d, vol), np.eye(d), rate=rate, **kw)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "spots": self.spots.tolist(),
            "vols": self.vols.tolist(),
            "corr": self.corr.tolist(),
            "rate": self.rate,
            "weights": self.weights.tolist(),
            "maturity": self.maturity,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "BasketSpec":
        for key in ("spots", "vols"):
            if key not in doc:
                raise DomainError(f"basket spec is missing field '{key}'")
        d = len(doc["spots"])
        if "d" in doc and int(doc["d"]) != d:
            raise DomainError(f"field 'd' is {doc['d']} but 'spots' has {d} entries")
        corr = doc.get("corr", np.eye(d).tolist())
        return cls(
            spots=doc["spots"],
            vols=doc["vols"],
            corr=corr,
            rate=doc.get("rate", 0.0),
            weights=doc.get("weights"),
            maturity=doc.get("maturity", 1.0),
        )

    @classmethod
    def from_json(cls, text: str) -> "BasketSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ChartPoint:
    y: np.ndarray
    x_chart: np.ndarray


def to_chart(spec: BasketSpec, S) -> ChartPoint:
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        raise DomainError("prices must be strictly positive to enter the log chart")
    y = np.log(S / spec.spots) / spec.vols
    x = solve_triangular(spec.chol, y, lower=True)
    return ChartPoint(y=y, x_chart=x)


def from_chart(spec: BasketSpec, x_chart) -> np.ndarray:
    y = spec.chol @ np.asarray(x_chart, dtype=float)
    return spec.spots * np.exp(spec.vols * y)


def asian_to_basket(S0: float, sigma: float, N: int, dt: float, rate: float = 0.0) -> BasketSpec:
    """Discretely monitored Asian average as a basket on correlated assets.

    Fixing ``t_i = i * dt`` gives assets with vols ``sqrt(i) * sigma``,
    correlation ``min(i, j) / sqrt(i j)``, weights ``1/N`` and maturity ``dt``.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"number of monitoring dates must be a positive integer, got {N}")
    if not dt > 0:
        raise DomainError("monitoring interval must be positive")
    N = int(N)
    idx = np.arange(1, N + 1, dtype=float)
    corr = np.minimum.outer(idx, idx) / np.sqrt(np.outer(idx, idx))
    np.fill_diagonal(corr, 1.0)
    return BasketSpec(
        spots=np.full(N, float(S0)),
        vols=np.sqrt(idx) * sigma,
        corr=corr,
        rate=rate,
        weights=np.full(N, 1.0 / N),
        maturity=dt,
    )
