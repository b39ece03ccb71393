"""Brute-force FIN3 oracle: cylinder masses by enumerating every (state, control word) pair."""

import itertools
import math

import numpy as np

from qsmlab.discretization import control_quadrature, discretize, finite_grid
from qsmlab.entropy import admissible_control_sets, word_masses
from qsmlab.partitions import build_invariant_partition
from qsmlab.qsm import power_qsm
from qsmlab.systems import make_fin3

spec = make_fin3()
dz = discretize(spec, finite_grid(spec), control_quadrature(spec.noise))
qsm = power_qsm(dz.ulam)
eta, rho = qsm.eta, qsm.rho
C = build_invariant_partition(dz, eta, 1, 1)
table = spec.table
Q = {0, 1}
elem = {0: 0, 1: 1}
keep = {P: {u for u in range(2) if all(table[x][u] in Q for x in C.elements[P])} for P in range(2)}

n = 2
brute: dict[tuple, float] = {}
for x in (0, 1):
    for us in itertools.product(range(2), repeat=n):
        y, word, ok = x, [], True
        for u in us:
            P = elem.get(y)
            if P is None or u not in keep[P]:
                ok = False
                break
            word.append(P)
            y = table[y][u]
        if ok:
            brute[tuple(word)] = brute.get(tuple(word), 0.0) + eta[x] * 0.5 ** n
acs = admissible_control_sets(C, dz, eta)
tree = word_masses(C, acs, eta, rho, n, dz)
print(f"rho = {rho!r}  (1+sqrt5)/4 = {(1 + math.sqrt(5)) / 4!r}")
print(f"eta = {eta.tolist()}")
for w in sorted(brute):
    print(f"word {list(w)}: brute force {brute[w]:.12f}  recursion {tree.mass_dict(n).get(w, 0.0):.12f}")
H2 = -sum(v / rho * math.log(v / rho) for v in brute.values())
print(f"H_2 = {H2:.10f}")
