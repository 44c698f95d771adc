"""Plot-ready data for the focal-curve pictures and the determinant curves.

Writes into --out (default ``results/figures``):

* ``focal_curve_K{K}.csv``: strike curve, unit normal, curvature and focal point
  for the unit two-asset basket at K = 2e (focal curve through the origin)
  and K = 2/e (in the money, focal curve outside the positive quadrant);
* ``det_curve_d{d}.csv``: normalised det M along the symmetric branch, d = 2..5;
* ``critical_strikes.csv``: K* from the determinant and from the focal crossing.

    python3 scripts/reproduce_figures.py --out results/figures
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from basket_asymptotics import geometry
from basket_asymptotics.errors import BracketError, DomainError
from basket_asymptotics.focality import critical_strike, focal_crossing_strike, focality_at
from basket_asymptotics.hamiltonian import HamiltonianSystem
from basket_asymptotics.model import BasketSpec, from_chart


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in r.items()})


def focal_curve(spec, K, n=400):
    q_max = np.log(K / spec.spots[0]) / spec.vols[0]
    rows = []
    for q in np.linspace(q_max - 6 / spec.vols[0], q_max, n + 1)[:-1]:
        try:
            W = geometry.weingarten(spec, K, [q])
        except DomainError:
            continue
        k = float(W.curvatures[0])
        f = W.point + W.normal / k
        S = from_chart(spec, W.point)
        rows.append({"q": float(q), "phi1": float(W.point[0]), "phi2": float(W.point[1]),
                     "S1": float(S[0]), "S2": float(S[1]), "N1": float(W.normal[0]), "N2": float(W.normal[1]),
                     "kappa": k, "f1": float(f[0]), "f2": float(f[1])})
    return rows


def det_curve(d, n=200):
    sys = HamiltonianSystem(BasketSpec.symmetric(d))
    rows = []
    for K in np.linspace(1.05 * d, 5 * d, n):
        r = focality_at(sys, K, method="analytic")
        rows.append({"K": float(K), "K_over_d": float(K / d), "det": r.det,
                     "normalized_det": r.det / r.scale, "verdict": r.verdict})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/figures")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    spec = BasketSpec.symmetric(2)
    for label, K in (("2e", 2 * np.e), ("2_over_e", 2 / np.e)):
        rows = focal_curve(spec, K)
        write_csv(out / f"focal_curve_K{label}.csv", rows)
        d0 = min(np.hypot(r["f1"], r["f2"]) for r in rows)
        pos = sum(r["f1"] > 0 and r["f2"] > 0 for r in rows)
        print(f"K={label}: {len(rows)} points, closest focal point to origin {d0:.2e}, "
              f"{pos} focal points in the positive quadrant")

    crit = []
    for d in (2, 3, 4, 5):
        write_csv(out / f"det_curve_d{d}.csv", det_curve(d))
        sys = HamiltonianSystem(BasketSpec.symmetric(d))
        k_det = critical_strike(sys)
        try:
            k_geo = focal_crossing_strike(sys)
        except BracketError:
            k_geo = float("nan")
        crit.append({"d": d, "K_det": k_det, "K_geo": k_geo, "d_e": d * np.e})
        print(f"d={d}: K* = {k_det:.12f} (d e = {d * np.e:.12f}), focal crossing {k_geo:.12f}")
    write_csv(out / "critical_strikes.csv", crit)


if __name__ == "__main__":
    main()
