"""Scan alpha for both circle examples: survival rate, smallest eta on the invariant set, control sets.

Shows why the examples run at alpha = 0.09: close to alpha0 = sigma - A the survival rate is
within 1e-12 of 1 and eta underflows near the upper end of Q.
"""

import argparse

import numpy as np

from qsmlab.controlsets import find_w_control_sets
from qsmlab.discretization import build_grid, control_quadrature, discretize
from qsmlab.qsm import QSMError, power_qsm
from qsmlab.systems import circle

CASES = {"circle1": (0.2, 0.5), "circle2": (0.1, 0.7)}


def scan(family: str, alphas, cells: int, samples: int, m: int) -> None:
    lo, hi = CASES[family]
    print(f"{family} on [{lo}, {hi}]")
    print(f"{'alpha':>7} {'rho':>14} {'sets':>5} {'invariant':>10} {'min eta on inv':>15}")
    for alpha in alphas:
        spec = circle(family, alpha=alpha)
        dz = discretize(spec, build_grid(lo, hi, cells, samples, circle=True), control_quadrature(spec.noise, m))
        try:
            qsm = power_qsm(dz.ulam)
        except QSMError as e:
            print(f"{alpha:7.3f} no qsm: {e}")
            continue
        sets = find_w_control_sets(dz.graph, dz.grid)
        inv = [D for D in sets if D.invariant]
        mins = min((float(qsm.eta[list(D.cells)].min()) for D in inv), default=float("nan"))
        print(f"{alpha:7.3f} {qsm.rho:14.10f} {len(sets):5d} {len(inv):10d} {mins:15.3e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--cells", type=int, default=512)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--m", type=int, default=8)
    a = p.parse_args()
    alphas = np.round(np.arange(0.055, 0.1201, 0.005), 4)
    for fam in CASES:
        scan(fam, alphas, a.cells, a.samples, a.m)
