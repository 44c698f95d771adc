"""Reference densities for basket values.

* exact two-asset density by quadrature of the lognormal convolution,
* three-asset uncorrelated density by an outer quadrature of that convolution,
* Laplace approximations of the two-asset convolution (quadratic and quartic),
* a seeded Monte Carlo kernel density estimate for any basket.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma, log_expit

from .errors import AccuracyError, DomainError, PreconditionError
from .model import BasketSpec

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
# 3^{1/4} Gamma(1/4) / (5^{1/4} 2 sqrt(2) pi e)
QUARTIC_CONSTANT = 3**0.25 * gamma(0.25) / (5**0.25 * 2 * np.sqrt(2) * np.pi * np.e)


class MixedRegimeWarning(RuntimeWarning):
    """Second derivative at the saddle is almost zero away from the exact degenerate strike."""


# -- lognormal building blocks --------------------------------------------------

def lognormal_logpdf(x, mu, xi):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(x)
        out = -0.5 * ((lx - mu) / xi) ** 2 - lx - np.log(xi) - LOG_SQRT_2PI
    return np.where(x > 0, out, -np.inf)


def lognormal_pdf(x, mu, xi):
    """Density of ``exp(N(mu, xi^2))``; zero for ``x <= 0``."""
    if np.any(np.asarray(xi) <= 0):
        raise DomainError("lognormal scale must be positive")
    out = np.exp(lognormal_logpdf(x, mu, xi))
    return out if np.ndim(out) else float(out)


def lognormal_params(spec: BasketSpec, T: float):
    """Log-mean and log-scale of each weighted asset ``w_i S^i_T``."""
    if not T > 0:
        raise DomainError("maturity must be positive")
    mu = np.log(spec.weights * spec.spots) + (spec.rate - 0.5 * spec.vols**2) * T
    xi = spec.vols * np.sqrt(T)
    return mu, xi


# -- quadrature --------------------------------------------------------------------

def _integrate_log(logf, lo, hi, n_scan, epsrel=1e-10, cutoff=60.0):
    """``log int exp(logf(u)) du`` over ``[lo, hi]``.

    ``logf`` must accept arrays.  A scan locates the peaks and the region where
    the integrand exceeds ``exp(-cutoff)`` times its maximum; adaptive
    quadrature then runs there with break points at the peaks.
    """
    u = np.linspace(lo, hi, n_scan)
    v = logf(u)
    m = np.max(v)
    if not np.isfinite(m):
        return -np.inf
    live = np.flatnonzero(v > m - cutoff)
    a = u[max(live[0] - 1, 0)]
    b = u[min(live[-1] + 1, u.size - 1)]
    inner = (v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > m - cutoff)
    peaks = [p for p in u[1:-1][inner] if a < p < b]
    g = lambda t: float(np.exp(logf(np.array([t]))[0] - m))
    val, err = quad(g, a, b, points=peaks or None, epsabs=0.0, epsrel=epsrel, limit=400)
    if not val > 0:
        return -np.inf
    if err > 100 * epsrel * val + 1e-300:
        raise AccuracyError(f"quadrature did not converge (estimate {val:.6e}, error {err:.2e})",
                            estimate=m + np.log(val))
    return m + np.log(val)


def _scan_window(mu, xi, K):
    spread = np.max(np.abs(mu - np.log(K))) + 12 * np.max(xi) + 8
    h = min(np.min(xi) / 6, 0.05)
    n = int(np.clip(2 * spread / h, 801, 40001))
    return -spread, spread, n


def _log_conv_uv(mu, xi, K):
    """Log integrand of the two-term convolution after ``x = K expit(u)``.

    With ``x (K - x) = K^2 s (1 - s)`` the Jacobian cancels the ``1/x`` factors,
    leaving ``phi(z1) phi(z2) / (xi1 xi2 K)``.
    """
    lK = np.log(K)
    c = -np.log(xi[0] * xi[1] * K) - 2 * LOG_SQRT_2PI

    def logf(u):
        lx2 = lK + log_expit(u)  # second asset takes x
        lx1 = lK + log_expit(-u)  # first asset takes K - x
        return c - 0.5 * ((lx1 - mu[0]) / xi[0]) ** 2 - 0.5 * ((lx2 - mu[1]) / xi[1]) ** 2

    return logf


def _require_uncorrelated(spec, d):
    if spec.d != d:
        raise PreconditionError(f"this oracle needs exactly {d} assets, got {spec.d}")
    if not spec.is_uncorrelated():
        raise PreconditionError("this oracle needs uncorrelated assets")


def _log_conv2(mu, xi, K, epsrel):
    if not K > 0:
        return -np.inf
    lo, hi, n = _scan_window(mu, xi, K)
    return _integrate_log(_log_conv_uv(mu, xi, K), lo, hi, n, epsrel)


def log_convolution_density(spec: BasketSpec, K: float, T: float, epsrel: float = 1e-10) -> float:
    """Log of the exact density of ``w1 S1_T + w2 S2_T`` at ``K`` (two uncorrelated assets)."""
    _require_uncorrelated(spec, 2)
    mu, xi = lognormal_params(spec, T)
    return _log_conv2(mu, xi, float(K), epsrel)


def convolution_density(spec: BasketSpec, K: float, T: float, epsrel: float = 1e-10) -> float:
    """Exact two-asset basket density by quadrature of the lognormal convolution."""
    return float(np.exp(log_convolution_density(spec, K, T, epsrel)))


def log_reduced_density(spec: BasketSpec, K: float, T: float, epsrel: float = 1e-8, n_scan: int = 401) -> float:
    """Log density of a three-asset uncorrelated basket.

    The third asset is integrated out against the exact two-asset density:
    ``f(K) = int f_3(x) f_12(K - x) dx``.
    """
    _require_uncorrelated(spec, 3)
    mu, xi = lognormal_params(spec, T)
    if not K > 0:
        return -np.inf
    lK = np.log(K)
    mu12, xi12 = mu[:2], xi[:2]

    def logf(u):
        u = np.atleast_1d(u)
        lx3 = lK + log_expit(u)
        lrest = lK + log_expit(-u)
        # dx = x (K - x) / K du
        out = lognormal_logpdf(np.exp(lx3), mu[2], xi[2]) + lx3 + lrest - lK
        inner = np.array([_log_conv2(mu12, xi12, float(np.exp(r)), epsrel) for r in lrest])
        return out + inner

    spread = np.max(np.abs(mu - lK)) + 10 * np.max(xi) + 6
    return _integrate_log(logf, -spread, spread, n_scan, epsrel)


def reduced_density(spec: BasketSpec, K: float, T: float, epsrel: float = 1e-8) -> float:
    return float(np.exp(log_reduced_density(spec, K, T, epsrel)))


def reduced_density_grid(spec: BasketSpec, K_grid, T: float, points_per_scale: float = 8.0) -> np.ndarray:
    """Vectorised three-asset density on a strike grid.

    Same iterated integral as :func:`reduced_density`, evaluated by the
    trapezoidal rule in both logistic variables.  The integrand is analytic
    with Gaussian tails there, so the rule converges spectrally.
    """
    _require_uncorrelated(spec, 3)
    mu, xi = lognormal_params(spec, T)
    h = min(np.min(xi) / points_per_scale, 0.05)
    out = np.empty(len(K_grid))
    for k, K in enumerate(np.asarray(K_grid, dtype=float)):
        lK = np.log(K)
        spread = np.max(np.abs(mu - lK)) + 12 * np.max(xi) + 8
        u = np.arange(-spread, spread + h, h)
        # outer: third asset takes x3 = K expit(u), the pair shares the rest
        lx3 = lK + log_expit(u)
        lrest = lK + log_expit(-u)
        outer = -0.5 * ((lx3 - mu[2]) / xi[2]) ** 2 - np.log(xi[2]) - LOG_SQRT_2PI + lrest - lK
        # inner convolution at level R = exp(lrest), vectorised over v
        v = u[None, :]
        l2 = lrest[:, None] + log_expit(v)
        l1 = lrest[:, None] + log_expit(-v)
        inner = (-0.5 * ((l1 - mu[0]) / xi[0]) ** 2 - 0.5 * ((l2 - mu[1]) / xi[1]) ** 2
                 - np.log(xi[0] * xi[1]) - 2 * LOG_SQRT_2PI - lrest[:, None])
        L = outer[:, None] + inner
        m = np.max(L)
        out[k] = np.exp(m) * np.sum(np.exp(L - m)) * h * h if np.isfinite(m) else 0.0
    return out


def exact_density(spec: BasketSpec, K: float, T: float) -> float:
    """Quadrature reference for one, two or three uncorrelated assets."""
    if spec.d == 1:
        mu, xi = lognormal_params(spec, T)
        return lognormal_pdf(K, mu[0], xi[0])
    if spec.d == 2:
        return convolution_density(spec, K, T)
    if spec.d == 3:
        return reduced_density(spec, K, T)
    raise PreconditionError("quadrature reference is available for d <= 3 only")


# -- Laplace approximation of the unit two-asset convolution ----------------------

class HDerivatives(NamedTuple):
    h: float
    d1: float
    d2: float
    d3: float
    d4: float


def h_function(K: float, T: float, x: float) -> HDerivatives:
    """Exponent ``h(x) = (log x + T/2)^2 + (log(K - x) + T/2)^2`` and its derivatives.

    The unit two-asset density is ``exp(-h(x) / (2T)) / (2 pi T x (K - x))``
    integrated over ``x`` in ``(0, K)``.
    """
    if not 0 < x < K:
        raise DomainError(f"x={x} outside (0, K={K})")
    y = K - x
    A = np.log(x) + T / 2
    B = np.log(y) + T / 2
    h = A**2 + B**2
    d1 = 2 * A / x - 2 * B / y
    d2 = 2 * (1 - A) / x**2 + 2 * (1 - B) / y**2
    d3 = (4 * A - 6) / x**3 - (4 * B - 6) / y**3
    d4 = (22 - 12 * A) / x**4 + (22 - 12 * B) / y**4
    return HDerivatives(float(h), float(d1), float(d2), float(d3), float(d4))


def degenerate_strike(T: float) -> float:
    """Strike at which the saddle of the unit two-asset convolution is quartic."""
    return 2 * np.exp(1 - T / 2)


def h_minima(K: float, T: float):
    """Minimisers of ``h`` on ``(0, K)``: ``K/2`` or a symmetric pair around it."""
    mid = K / 2
    if h_function(K, T, mid).d2 >= 0:
        return [mid]

    def g(x):
        # x (K - x) h'(x) / 2, free of the endpoint singularities
        return (np.log(x) + T / 2) * (K - x) - (np.log(K - x) + T / 2) * x

    x1 = brentq(g, K * 1e-200, mid * (1 - 1e-12), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return [x1, K - x1]


def laplace_density(K: float, T: float, h2_tol: Optional[float] = None, degenerate_rtol: float = 1e-12) -> float:
    """Laplace approximation of the unit symmetric two-asset density.

    Quadratic branch: sum over the minima of ``h`` of
    ``sqrt(2 pi 2T / h'') exp(-h / 2T) / (2 pi T x (K - x))``.
    Quartic branch on the degenerate family ``K = 2 exp(1 - T/2)``:
    ``QUARTIC_CONSTANT * exp(-1/T) * T^{-3/4}``.  A near-zero second
    derivative elsewhere triggers :class:`MixedRegimeWarning`; the saddle
    contribution is then integrated with both quadratic and quartic terms.
    """
    if not T > 0 or not K > 0:
        raise DomainError("strike and maturity must be positive")
    if h2_tol is None:
        h2_tol = 1e-3 * 16 / K**2
    K_deg = degenerate_strike(T)
    mid = h_function(K, T, K / 2)
    if abs(K - K_deg) <= degenerate_rtol * K_deg:
        return float(QUARTIC_CONSTANT * np.exp(-1 / T) * T**-0.75)
    if abs(mid.d2) <= h2_tol:
        warnings.warn(
            f"h''(K/2) = {mid.d2:.3e} is within {h2_tol:.1e} of zero at K={K}, off the degenerate "
            f"strike {K_deg:.12g}; using the quadratic plus quartic saddle integral",
            MixedRegimeWarning,
            stacklevel=2,
        )
        a2, a4 = mid.d2 / 2, mid.d4 / 24
        g = lambda s: np.exp(-(a2 * s**2 + a4 * s**4) / (2 * T))
        width = (2 * T / a4) ** 0.25 * 8
        I, _ = quad(g, -width, width, epsabs=0, epsrel=1e-12, limit=200)
        return float(I * np.exp(-mid.h / (2 * T)) / (2 * np.pi * T * (K / 2) ** 2))
    total = 0.0
    for x in h_minima(K, T):
        hd = h_function(K, T, x)
        total += np.sqrt(4 * np.pi * T / hd.d2) * np.exp(-hd.h / (2 * T)) / (2 * np.pi * T * x * (K - x))
    return float(total)


# -- Monte Carlo -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityCurve:
    strikes: np.ndarray
    values: np.ndarray
    method: str
    stderr: Optional[np.ndarray] = None
    bandwidth: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "bandwidth": self.bandwidth,
            "strikes": self.strikes.tolist(),
            "values": self.values.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["K", "value", "stderr", "method"])
        se = self.stderr if self.stderr is not None else [np.nan] * len(self.strikes)
        for k, v, s in zip(self.strikes, self.values, se):
            w.writerow(["%.17g" % k, "%.17g" % v, "%.17g" % s, self.method])
        return buf.getvalue()


def quadrature_curve(spec: BasketSpec, K_grid, T: float) -> DensityCurve:
    K_grid = np.asarray(K_grid, dtype=float)
    if spec.d == 3:
        return DensityCurve(K_grid, reduced_density_grid(spec, K_grid, T), "quadrature")
    vals = np.array([exact_density(spec, K, T) for K in K_grid])
    return DensityCurve(K_grid, vals, "quadrature")


def laplace_curve(K_grid, T: float) -> DensityCurve:
    K_grid = np.asarray(K_grid, dtype=float)
    return DensityCurve(K_grid, np.array([laplace_density(K, T) for K in K_grid]), "laplace")


def sample_basket(spec: BasketSpec, T: float, n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, spec.d))
    mu, xi = lognormal_params(spec, T)
    return np.exp(mu + xi * (Z @ spec.chol.T)).sum(axis=1)


def silverman_bandwidth(samples: np.ndarray) -> float:
    n = samples.size
    sd = np.std(samples, ddof=1)
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * n ** (-0.2))


def undersmoothed_bandwidth(samples: np.ndarray) -> float:
    """Silverman's rule times ``n^{-1/10}``.

    The kernel bias shrinks like ``h^2`` while the standard error grows like
    ``(n h)^{-1/2}``; this scaling makes the bias negligible against the
    standard error, which is what pointwise comparisons with exact densities need.
    """
    return silverman_bandwidth(samples) * samples.size ** (-0.1)


BANDWIDTH_RULES = {"silverman": silverman_bandwidth, "undersmoothed": undersmoothed_bandwidth}


def _kde(samples, grid, h, chunk=20000):
    out = np.zeros(grid.size)
    for i in range(0, samples.size, chunk):
        z = (grid[:, None] - samples[None, i:i + chunk]) / h
        out += np.exp(-0.5 * z * z).sum(axis=1)
    return out / (samples.size * h * np.sqrt(2 * np.pi))


def mc_density(
    spec: BasketSpec,
    K_grid,
    T: float,
    n_paths: int = 10**6,
    seed: int = 0,
    bandwidth=None,
    n_batches: int = 20,
) -> DensityCurve:
    """Gaussian kernel density estimate of the basket value at ``T``.

    Each of ``n_batches`` batches draws from its own generator spawned from
    ``seed``, so the curve depends only on the seed.  The estimate is the mean
    of the batch curves and ``stderr`` their standard error.  ``bandwidth`` is
    a positive number or a rule name from ``BANDWIDTH_RULES`` applied to the
    pooled sample; the default is Silverman's rule.
    """
    if n_paths < 10**4:
        raise DomainError("n_paths must be at least 1e4")
    if bandwidth is None:
        bandwidth = "silverman"
    if isinstance(bandwidth, str):
        if bandwidth not in BANDWIDTH_RULES:
            raise DomainError(f"unknown bandwidth rule {bandwidth!r}")
    elif not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    K_grid = np.asarray(K_grid, dtype=float)
    children = np.random.SeedSequence(int(seed)).spawn(n_batches)
    sizes = np.full(n_batches, n_paths // n_batches)
    sizes[: n_paths % n_batches] += 1
    batches = [sample_basket(spec, T, int(m), np.random.Generator(np.random.PCG64(c)))
               for m, c in zip(sizes, children)]
    if isinstance(bandwidth, str):
        h = BANDWIDTH_RULES[bandwidth](np.concatenate(batches))
    else:
        h = float(bandwidth)
    curves = np.array([_kde(b, K_grid, h) for b in batches])
    values = (sizes @ curves) / sizes.sum()
    stderr = np.std(curves, axis=0, ddof=1) / np.sqrt(n_batches)
    return DensityCurve(K_grid, values, "monte_carlo", stderr=stderr, bandwidth=h)

