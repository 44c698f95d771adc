"""Density regimes of the unit two-asset basket and the symmetric-branch switch.

Three experiments, each written as CSV into --out (default ``results/regimes``):

* ``short_time.csv``: quadrature density against the leading-order expansion
  at K = 4 (generic) and on the degenerate family K = 2 exp(1 - T/2);
* ``switch.csv``: for d = 2, 3, 5 the strike ratio K/d at which the
  symmetric path stops being the cheapest arrival path;
* ``small_noise.csv``: c2 from the first-order correction against a fit of
  the small-noise quadrature density.

    python3 scripts/density_regimes.py --out results/regimes
"""
import argparse
import csv
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from basket_asymptotics.bvp import solve_bvp, symmetric_closed_form
from basket_asymptotics.expansion import fit_power, small_noise_density
from basket_asymptotics.hamiltonian import HamiltonianSystem
from basket_asymptotics.model import BasketSpec
from basket_asymptotics.oracle import QUARTIC_CONSTANT, degenerate_strike, laplace_density, log_convolution_density

UNIT2 = BasketSpec.symmetric(2)


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in r.items()})


def short_time():
    rows = []
    for T in np.geomspace(0.002, 0.1, 15):
        for label, K, lam in (("K=4", 4.0, np.log(2) ** 2), ("degenerate", degenerate_strike(T), 1.0)):
            logf = log_convolution_density(UNIT2, K, T)
            rows.append({"family": label, "T": float(T), "K": float(K), "log_f": logf,
                         "log_f_laplace": float(np.log(laplace_density(K, T))),
                         "scaled": float(logf + lam / T)})
    Ts = np.geomspace(0.002, 0.02, 10)
    for label, lam in (("K=4", np.log(2) ** 2), ("degenerate", 1.0)):
        Ks = [4.0 if label == "K=4" else degenerate_strike(T) for T in Ts]
        p = fit_power(Ts, [log_convolution_density(UNIT2, K, T) for K, T in zip(Ks, Ts)], lam)
        print(f"{label}: fitted power {p:.4f}")
    T = 0.005
    ratio = np.exp(log_convolution_density(UNIT2, degenerate_strike(T), T) + 0.75 * np.log(T) + 1 / T)
    print(f"degenerate constant at T={T}: {ratio:.6f} vs closed form {QUARTIC_CONSTANT:.6f}")
    return rows


def energy_gap(sys, K):
    """Closed-form symmetric energy minus the global minimum found by shooting."""
    return symmetric_closed_form(sys, K).energy - solve_bvp(sys, K).lam


def switch():
    rows = []
    for d in (2, 3, 5):
        sys = HamiltonianSystem(BasketSpec.symmetric(d))
        ratios = np.linspace(1.2, 3.0, 91)
        gaps = np.array([energy_gap(sys, r * d) for r in ratios])
        i = int(np.argmax(gaps > 1e-9))
        r_switch = brentq(lambda r: energy_gap(sys, r * d) - 1e-9, ratios[i - 1], ratios[i], xtol=1e-6)
        rows.append({"d": d, "switch_ratio": float(r_switch), "focal_ratio": float(np.e),
                     "gap_at_3d": float(gaps[-1] / symmetric_closed_form(sys, 3.0 * d).energy)})
        print(f"d={d}: symmetric path stops being minimal at K/d = {r_switch:.4f} (focal at e = {np.e:.4f})")
    return rows


def small_noise(r=0.05):
    rows = []
    sys = HamiltonianSystem(BasketSpec.symmetric(2, rate=r), drift_mode="scaled_rate")
    eps = np.geomspace(0.02, 0.1, 12)
    for K in (3.0, 4.0, 5.0):
        res = small_noise_density(sys, K, 0.1)
        # the scaled drift is a constant rate r / eps over the time eps^2
        y = np.array([log_convolution_density(BasketSpec.symmetric(2, rate=r / e), K, e * e) for e in eps])
        y += res.lam / eps**2 + np.log(eps)
        coef, *_ = np.linalg.lstsq(np.column_stack([np.ones_like(eps), 1 / eps, eps]), y, rcond=None)
        rows.append({"K": K, "c2": res.c2, "c2_fit": float(coef[1]), "c2_closed_form": float(2 * r * np.log(K / 2))})
        print(f"K={K:g}: c2 = {res.c2:.6f}, quadrature fit {coef[1]:.6f}")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/regimes")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "short_time.csv", short_time())
    write_csv(out / "switch.csv", switch())
    write_csv(out / "small_noise.csv", small_noise())


if __name__ == "__main__":
    main()
