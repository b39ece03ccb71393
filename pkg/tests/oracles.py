"""Independent brute-force references and frozen values for the finite fixtures."""

import itertools
import math

import numpy as np

RHO_FIN3 = (1 + math.sqrt(5)) / 4
ETA_FIN3 = ((math.sqrt(5) - 1) / 2, (3 - math.sqrt(5)) / 2)
FIN3_DEPTH2 = {(0, 0): 0.30902, (0, 1): 0.15451, (1, 0): 0.19098}
FIN3_H2 = 1.0246
D_ALPHA_006 = 0.26594


def brute_keep_words(spec, cells_states, q_states, tau):
    """Control words of length tau keeping every given state in Q for steps 1..tau."""
    m = len(spec.controls.values)
    out = set()
    for word in itertools.product(range(m), repeat=tau):
        ok = True
        for x in cells_states:
            y = x
            for u in word:
                y = spec.table[y][u]
                if y not in q_states:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.add(word)
    return out


def brute_word_masses(spec, eta_by_state, elements, tau, n, eta_tol=0.0):
    """mu(D_a) for all words a of length n by summing over every (state, control word of length n tau).

    elements are tuples of states; a control block is admissible for element P when it keeps all
    eta-positive states of P in Q.
    """
    q_states = set(spec.q_states if spec.q_states is not None else range(spec.state_count))
    m = len(spec.controls.values)
    elem_of = {x: i for i, P in enumerate(elements) for x in P}
    V = [brute_keep_words(spec, [x for x in P if eta_by_state.get(x, 0.0) > eta_tol], q_states, tau)
         for P in elements]
    out: dict[tuple, float] = {}
    for x, ex in eta_by_state.items():
        if ex <= 0 or x not in elem_of:
            continue
        for us in itertools.product(range(m), repeat=n * tau):
            y, word, ok = x, [], True
            for i in range(n):
                P = elem_of.get(y)
                block = us[i * tau:(i + 1) * tau]
                if P is None or block not in V[P]:
                    ok = False
                    break
                word.append(P)
                for u in block:
                    y = spec.table[y][u]
            if ok:
                out[tuple(word)] = out.get(tuple(word), 0.0) + ex * m ** (-n * tau)
    return out


def entropy_of_masses(masses, rho, n, tau):
    scale = rho ** (-(n - 1) * tau)
    return -sum(scale * v * math.log(scale * v) for v in masses if v > 0)


def random_table(rng, states, controls, exit_state=True):
    """Random finite system with Q = all states but the last (absorbing) one."""
    n = states + (1 if exit_state else 0)
    table = rng.integers(0, n, size=(n, controls)).tolist()
    if exit_state:
        table[n - 1] = [n - 1] * controls
    return table, tuple(range(states))
