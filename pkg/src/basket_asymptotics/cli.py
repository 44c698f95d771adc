"""Command line front end.

Commands: energy, critical, density, validate, geometry, asian, mc.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import bvp, expansion, focality, geometry, oracle
from .errors import AccuracyError, BracketError, ConvergenceError, DefinitenessError, DomainError, StiffnessError
from .errors import PreconditionError
from .hamiltonian import HamiltonianSystem
from .model import BasketSpec, asian_to_basket, from_chart

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
COMMANDS = ("energy", "critical", "density", "validate", "geometry", "asian", "mc")


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    def __init__(self, payload):
        super().__init__("validation failed")
        self.payload = payload


# -- configuration -----------------------------------------------------------------

def parse_grid(text, name: str = "grid") -> np.ndarray:
    """``"a:b:n"`` (inclusive linspace), ``"x1,x2,..."`` or a single number."""
    if text is None:
        return None
    if isinstance(text, (int, float)):
        vals = np.array([float(text)])
    elif isinstance(text, (list, tuple)):
        vals = np.array(text, dtype=float)
    else:
        s = str(text).strip()
        try:
            if ":" in s:
                a, b, n = s.split(":")
                n = int(n)
                if n < 1:
                    raise ValueError
                vals = np.linspace(float(a), float(b), n)
            else:
                vals = np.array([float(v) for v in s.split(",") if v.strip()])
        except ValueError:
            raise ConfigError(f"cannot parse {name} '{text}' (use a:b:n or a comma list)") from None
    if vals.size == 0:
        raise ConfigError(f"{name} is empty")
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ConfigError(f"{name} values must be positive")
    if np.any(np.diff(vals) <= 0):
        raise ConfigError(f"{name} must be strictly increasing")
    return vals


def load_spec(text: Optional[str], d: int = 2) -> BasketSpec:
    """Spec from a JSON file path or inline JSON; unit symmetric ``d``-asset basket when absent."""
    if text is None:
        return BasketSpec.symmetric(d)
    s = text.strip()
    try:
        if s.startswith("{"):
            doc = json.loads(s)
        else:
            doc = json.loads(Path(s).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read basket spec: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("basket spec must be a JSON object")
    try:
        return BasketSpec.from_dict(doc)
    except (DomainError, DefinitenessError) as exc:
        raise ConfigError(f"invalid basket spec: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid basket spec: {exc}") from None


@dataclass
class RunConfig:
    command: str
    spec: BasketSpec
    K: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None
    tol: float = 1e-10
    seed: int = 0
    paths: int = 10**6
    out: Optional[str] = None
    fmt: str = "json"
    bandwidth: object = None
    drift: str = "zero"
    K_lo: Optional[float] = None
    K_hi: Optional[float] = None
    q: Optional[str] = None
    asian: dict = field(default_factory=dict)

    def system(self) -> HamiltonianSystem:
        return HamiltonianSystem(self.spec, self.drift)


DEFAULTS = {
    "spec": None, "d": 2, "K": None, "T": None, "eps": None, "tol": 1e-10, "seed": 0,
    "paths": 10**6, "out": None, "format": "json", "bandwidth": None, "drift": "zero",
    "K_lo": None, "K_hi": None, "q": None, "S0": 1.0, "sigma": 1.0, "N": 2, "dt": 1.0, "rate": 0.0,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any flag")
    common.add_argument("--spec", help="basket spec JSON file or inline JSON")
    common.add_argument("--d", type=int, help="assets of the unit symmetric basket used without --spec")
    common.add_argument("--K", help="strike grid: a:b:n or comma list")
    common.add_argument("--T", help="maturity grid")
    common.add_argument("--eps", help="noise-level grid")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--tol", type=float, help="solver tolerance")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--bandwidth", help="kernel bandwidth: number, silverman or undersmoothed")
    common.add_argument("--drift", choices=("zero", "scaled_rate"), help="noise-scaled drift for small-noise runs")
    common.add_argument("--K-lo", dest="K_lo", type=float, help="lower end of the critical-strike bracket")
    common.add_argument("--K-hi", dest="K_hi", type=float, help="upper end of the critical-strike bracket")
    common.add_argument("--q", help="surface parameter grid for geometry (a:b:n, may be negative)")
    common.add_argument("--S0", type=float)
    common.add_argument("--sigma", type=float)
    common.add_argument("--N", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--rate", type=float)

    parser = argparse.ArgumentParser(prog="basket-asym", description="Basket density asymptotics")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "energy": "rate function Lambda(K) by shooting",
        "critical": "critical strike and det M curve",
        "density": "density expansions against quadrature",
        "validate": "regression and Monte Carlo checks",
        "geometry": "strike-surface curvature and focal points",
        "asian": "basket spec of a discretely monitored Asian average",
        "mc": "Monte Carlo density estimate",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Flags override config-file values, which override built-in defaults."""
    values = dict(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    spec_src = values["spec"]
    if isinstance(spec_src, dict):
        spec_src = json.dumps(spec_src)
    spec = load_spec(spec_src, int(values["d"]))
    if values["tol"] is not None and not values["tol"] > 0:
        raise ConfigError("tol must be positive")
    if int(values["paths"]) < 10**4:
        raise ConfigError("paths must be at least 10000")
    seed = int(values["seed"])
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    bw = values["bandwidth"]
    if bw is not None and bw not in oracle.BANDWIDTH_RULES:
        try:
            bw = float(bw)
        except ValueError:
            raise ConfigError(f"bandwidth must be a number or one of {sorted(oracle.BANDWIDTH_RULES)}") from None
        if not bw > 0:
            raise ConfigError("bandwidth must be positive")
    return RunConfig(
        command=args.command,
        spec=spec,
        K=parse_grid(values["K"], "K"),
        T=parse_grid(values["T"], "T"),
        eps=parse_grid(values["eps"], "eps"),
        tol=float(values["tol"]),
        seed=seed,
        paths=int(values["paths"]),
        out=values["out"],
        fmt=values["format"],
        bandwidth=bw,
        drift=values["drift"],
        K_lo=values["K_lo"],
        K_hi=values["K_hi"],
        q=values["q"],
        asian={k: values[k] for k in ("S0", "sigma", "N", "dt", "rate")},
    )


# -- output -------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def rows_to_csv(rows: List[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def render(payload, fmt: str) -> str:
    """``payload`` is a list of rows or a dict with a ``rows`` entry (CSV uses the rows)."""
    if fmt == "csv":
        rows = payload["rows"] if isinstance(payload, dict) else payload
        return rows_to_csv(rows)
    return json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n"


def emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands ---------------------------------------------------------------------

def _require(value, name):
    if value is None:
        raise ConfigError(f"--{name} is required for this command")
    return value


def cmd_energy(cfg: RunConfig):
    sysm = cfg.system()
    rows = []
    for K in _require(cfg.K, "K"):
        sol = bvp.solve_bvp(sysm, K, tol=cfg.tol)
        rows.append({
            "K": float(K),
            "lambda": sol.lam,
            "n_minimizers": len(sol.candidates),
            "n_roots": sol.n_solutions_found,
            "residual": max(c.residual for c in sol.candidates),
        })
    return rows


def cmd_critical(cfg: RunConfig):
    sysm = cfg.system()
    k_star = focality.critical_strike(sysm, cfg.K_lo, cfg.K_hi, rtol=min(cfg.tol, 1e-12))
    lo, hi = focality.default_bracket(cfg.spec)
    grid = cfg.K if cfg.K is not None else np.linspace(cfg.K_lo or lo, cfg.K_hi or hi, 50)
    rows = [{"kind": "critical", "K": k_star, "det": 0.0, "normalized_det": 0.0, "verdict": "focal"}]
    for K in grid:
        r = focality.focality_at(sysm, K)
        rows.append({"kind": "curve", "K": float(K), "det": r.det, "normalized_det": r.normalized_det,
                     "verdict": r.verdict})
    return {"K_star": k_star, "rows": rows}


def _quadrature_log(spec, K, T):
    try:
        if spec.d == 2 and spec.is_uncorrelated():
            return oracle.log_convolution_density(spec, K, T)
        if spec.d in (1, 3) and spec.is_uncorrelated():
            return float(np.log(oracle.exact_density(spec, K, T)))
    except PreconditionError:
        pass
    return None


def cmd_density(cfg: RunConfig):
    sysm = cfg.system()
    Ks = _require(cfg.K, "K")
    if cfg.T is None and cfg.eps is None:
        raise ConfigError("--T or --eps is required for density")
    rows = []
    for K in Ks:
        sol = bvp.solve_bvp(sysm, K, tol=cfg.tol)
        for T in (cfg.T if cfg.T is not None else []):
            r = expansion.short_time_density(sysm, K, T, solution=sol)
            lq = _quadrature_log(cfg.spec, K, T)
            rows.append({"K": float(K), "T_or_eps": float(T), "kind": "short_time", "lambda": r.lam, "c2": r.c2,
                         "power": r.power, "regime": r.regime, "f_asymptotic": r.f_asymptotic,
                         "log_shape": r.log_shape, "log_f_quadrature": lq})
        for e in (cfg.eps if cfg.eps is not None else []):
            r = expansion.small_noise_density(sysm, K, e, tol=max(cfg.tol, 1e-13), solution=sol)
            rows.append({"K": float(K), "T_or_eps": float(e), "kind": "small_noise", "lambda": r.lam, "c2": r.c2,
                         "power": r.power, "regime": r.regime, "f_asymptotic": r.f_asymptotic,
                         "log_shape": r.log_shape, "log_f_quadrature": None})
    return rows


EXPONENT_STRIKES = (3.0, 4.0, 4.8)
EXPONENT_TIMES = np.linspace(0.005, 0.05, 10)
POWER_TIMES = np.geomspace(0.002, 0.02, 10)
COVERAGE_TIMES = (0.25, 1.0)


def mc_coverage(spec, T, n_paths, seed, n_strikes=40, bandwidth="undersmoothed"):
    """Fraction of strikes where Monte Carlo and quadrature agree within 3 standard errors."""
    xi = np.max(spec.vols) * np.sqrt(T)
    F = spec.forward_basket
    Ks = np.linspace(F * np.exp(-1.5 * xi), F * np.exp(1.5 * xi), n_strikes)
    ref = oracle.quadrature_curve(spec, Ks, T).values
    mc = oracle.mc_density(spec, Ks, T, n_paths, seed, bandwidth=bandwidth)
    z = (mc.values - ref) / mc.stderr
    return float(np.mean(np.abs(z) <= 3)), float(np.max(np.abs(z)))


def cmd_validate(cfg: RunConfig):
    spec = cfg.spec
    if not (spec.d == 2 and spec.is_symmetric() and spec.spots[0] == 1 and spec.vols[0] == 1
            and spec.weights[0] == 1 and spec.rate == 0):
        raise ConfigError("validate runs on the unit symmetric two-asset basket")
    sysm = cfg.system()
    rows = []
    strikes = cfg.K if cfg.K is not None else EXPONENT_STRIKES
    for K in strikes:
        lam = bvp.solve_bvp(sysm, K, tol=cfg.tol).lam
        logf = [oracle.log_convolution_density(spec, K, T) for T in EXPONENT_TIMES]
        fit = expansion.fit_exponent(EXPONENT_TIMES, logf)
        err = abs(-fit["slope"] - lam) / lam
        rows.append({"check": f"exponent K={K:g}", "value": -fit["slope"], "target": lam, "tol": 0.02,
                     "pass": bool(err <= 0.02)})
    logf = [oracle.log_convolution_density(spec, oracle.degenerate_strike(T), T) for T in POWER_TIMES]
    p = expansion.fit_power(POWER_TIMES, logf, 1.0)
    rows.append({"check": "power degenerate", "value": p, "target": -0.75, "tol": 0.05,
                 "pass": bool(abs(p + 0.75) <= 0.05)})
    lam4 = np.log(2.0) ** 2
    logf = [oracle.log_convolution_density(spec, 4.0, T) for T in POWER_TIMES]
    p = expansion.fit_power(POWER_TIMES, logf, lam4)
    rows.append({"check": "power K=4", "value": p, "target": -0.5, "tol": 0.05,
                 "pass": bool(abs(p + 0.5) <= 0.05)})
    for T in COVERAGE_TIMES:
        cov, _ = mc_coverage(spec, T, cfg.paths, cfg.seed)
        rows.append({"check": f"mc coverage T={T:g}", "value": cov, "target": 0.95, "tol": 0.0,
                     "pass": bool(cov >= 0.95)})
    payload = {"passed": all(r["pass"] for r in rows), "rows": rows}
    if not payload["passed"]:
        raise ValidationFailure(payload)
    return payload


def cmd_geometry(cfg: RunConfig):
    spec = cfg.spec
    if spec.d != 2:
        raise ConfigError("geometry sweeps are for two assets")
    rows = []
    for K in _require(cfg.K, "K"):
        if cfg.q is not None:
            a, b, n = str(cfg.q).split(":")
            qs = np.linspace(float(a), float(b), int(n))
        else:
            # parameter domain: first asset below K
            q_max = np.log(K / (spec.weights[0] * spec.spots[0])) / (spec.vols[0] * spec.chol[0, 0])
            qs = np.linspace(q_max - 6.0 / spec.vols[0], q_max, 201)[:-1]
        for q in qs:
            try:
                W = geometry.weingarten(spec, K, [q])
            except DomainError:
                continue
            k = float(W.curvatures[0])
            f = W.point + W.normal / k if k != 0 else np.full(2, np.nan)
            S = from_chart(spec, W.point)
            rows.append({"K": float(K), "q": float(q), "phi1": W.point[0], "phi2": W.point[1],
                         "S1": S[0], "S2": S[1], "N1": W.normal[0], "N2": W.normal[1],
                         "kappa": k, "f1": f[0], "f2": f[1]})
    return rows


def cmd_asian(cfg: RunConfig):
    a = cfg.asian
    try:
        spec = asian_to_basket(a["S0"], a["sigma"], a["N"], a["dt"], a["rate"])
    except (DomainError, DefinitenessError) as exc:
        raise ConfigError(str(exc)) from None
    doc = spec.to_dict()
    if cfg.fmt == "csv":
        return [{"i": i + 1, "spot": spec.spots[i], "vol": spec.vols[i], "weight": spec.weights[i]}
                for i in range(spec.d)]
    return doc


def cmd_mc(cfg: RunConfig):
    T = _require(cfg.T, "T")
    if T.size != 1:
        raise ConfigError("mc takes a single maturity")
    curve = oracle.mc_density(cfg.spec, _require(cfg.K, "K"), float(T[0]), cfg.paths, cfg.seed,
                              bandwidth=cfg.bandwidth)
    rows = [{"K": k, "value": v, "stderr": s, "method": curve.method}
            for k, v, s in zip(curve.strikes, curve.values, curve.stderr)]
    return {"bandwidth": curve.bandwidth, "seed": cfg.seed, "paths": cfg.paths, "T": float(T[0]), "rows": rows}


HANDLERS = {
    "energy": cmd_energy, "critical": cmd_critical, "density": cmd_density, "validate": cmd_validate,
    "geometry": cmd_geometry, "asian": cmd_asian, "mc": cmd_mc,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args)
        payload = HANDLERS[cfg.command](cfg)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, StiffnessError, AccuracyError, BracketError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationFailure as exc:
        emit(render(exc.payload, cfg.fmt), cfg.out)
        print("validation failed", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit(render(payload, cfg.fmt), cfg.out)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))
