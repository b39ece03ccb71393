"""Admissible words, cylinder masses and invariance entropies of invariant partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .discretization import Discretization, all_words, word_operator
from .partitions import (LEX, InvariantPartition, build_invariant_partition, positive_cells,
                         survival_table)

INV_E = 1.0 / math.e


def phi(x: float) -> float:
    """x log x with phi(0) = 0."""
    return x * math.log(x) if x > 0.0 else 0.0


def entropy_of(values: Iterable[float]) -> float:
    """-sum phi(x), summed with fsum so the result does not depend on the order of the values."""
    return -math.fsum(phi(float(x)) for x in values)


# ---------------------------------------------------------------- admissible control sets


@dataclass(frozen=True, eq=False)
class AdmissibleControlSet:
    tau: int
    words: tuple[np.ndarray, ...]  # per element: lexicographic word indices in V_P
    mass: np.ndarray  # per element: nu^tau(V_P)
    operator: sp.csr_matrix = field(repr=False)  # rows c: T_{P(c)}(c -> .)

    def word_tuples(self, i: int, m: int) -> list[tuple[int, ...]]:
        table = all_words(m, self.tau)
        return [tuple(int(v) for v in table[k]) for k in self.words[i]]


def admissible_control_sets(C: InvariantPartition, dz: Discretization, eta: np.ndarray,
                            budget: int = 4096, support_tol: float = 0.0) -> AdmissibleControlSet:
    """V_P = words keeping all samples of the eta-positive cells of P in the region for tau steps."""
    tau, m = C.tau, dz.quad.m
    keep, _ = survival_table(dz, tau, C.region, budget)
    table = all_words(m, tau)
    wprob = np.prod(dz.quad.weights[table], axis=1)
    words, mass = [], []
    row_ok = np.zeros((dz.grid.n, table.shape[0]), dtype=bool)
    for P, F in zip(C.elements, C.feedback):
        pos = [c for c in P if eta[c] > support_tol]
        ok = keep[pos].all(axis=0) if pos else np.ones(table.shape[0], dtype=bool)
        idx = np.flatnonzero(ok)
        if pos and _word_index(F, m) not in set(idx.tolist()):
            raise ValueError(f"feedback {F} of element {P[:3]}... is not admissible")
        words.append(idx)
        mass.append(math.fsum(wprob[idx]))
        row_ok[list(P)] = ok
    op = _tau_operator(dz, C.region, tau, row_ok, wprob)
    return AdmissibleControlSet(tau, tuple(words), np.array(mass), op)


def _word_index(word: Sequence[int], m: int) -> int:
    k = 0
    for v in word:
        k = k * m + int(v)
    return k


def _tau_operator(dz: Discretization, region, tau: int, row_ok: np.ndarray, wprob: np.ndarray) -> sp.csr_matrix:
    """sum over words w of nu(w) * diag(row_ok[:, w]) * U_w, with U_w restricted to the region."""
    mats = dz.ulam.restricted(region).node_matrices
    m = len(mats)
    n = dz.grid.n
    total = sp.csr_matrix((n, n))

    def rec(prefix_op, prefix_idx, depth):
        nonlocal total
        for k in range(m):
            op = mats[k] if prefix_op is None else prefix_op @ mats[k]
            idx = prefix_idx * m + k
            if depth + 1 == tau:
                rows = row_ok[:, idx]
                if rows.any():
                    total = total + wprob[idx] * (sp.diags(rows.astype(float)) @ op)
            else:
                # skip prefixes no row can use
                span = m ** (tau - depth - 1)
                if row_ok[:, idx * span:(idx + 1) * span].any():
                    rec(op, idx, depth + 1)

    rec(None, 0, 0)
    total = total.tocsr()
    total.eliminate_zeros()
    total.sort_indices()
    return total


# ---------------------------------------------------------------- word trees


@dataclass(eq=False)
class WordTree:
    """Admissible words by depth: parent index, last element and cylinder mass of each node."""

    tau: int
    rho: float
    parent: list[np.ndarray]
    elem: list[np.ndarray]
    mass: list[np.ndarray]
    truncated: bool = False
    n_max: int = 0

    @property
    def depth(self) -> int:
        return len(self.mass)

    def word(self, depth: int, i: int) -> tuple[int, ...]:
        out = []
        d = depth
        while d >= 1:
            out.append(int(self.elem[d - 1][i]))
            i = int(self.parent[d - 1][i])
            d -= 1
        return tuple(reversed(out))

    def words(self, depth: int) -> list[tuple[int, ...]]:
        return [self.word(depth, i) for i in range(len(self.mass[depth - 1]))]

    def mass_dict(self, depth: int) -> dict[tuple[int, ...], float]:
        return dict(zip(self.words(depth), self.mass[depth - 1].tolist()))

    def scale(self, n: int) -> float:
        """rho^{-(n-1) tau}: the normalisation of depth-n masses."""
        return self.rho ** (-(n - 1) * self.tau)

    def mass_sum(self, n: int) -> float:
        return math.fsum(self.mass[n - 1].tolist())

    def residual(self, n: int) -> float:
        """Mass of Z_n: rho^{(n-1) tau} minus the mass of the depth-n words."""
        return self.rho ** ((n - 1) * self.tau) - self.mass_sum(n)

    def child_sums(self, n: int) -> np.ndarray:
        """For each depth-n node, the total mass of its depth-(n+1) children."""
        out = np.zeros(len(self.mass[n - 1]))
        if n < self.depth:
            np.add.at(out, self.parent[n], self.mass[n])
        return out


def _expand(elements: Sequence[Sequence[int]], start: list[np.ndarray], op: sp.csr_matrix,
            leaf_weight: np.ndarray, n_cells: int, n_max: int, budget: int,
            binary: bool = False, chunk: int = 4096):
    """Grow the word tree breadth first.

    A node ending in element p carries a vector on the cells of p; its value is
    sum(vector) * leaf_weight[p] and children exist where that value is positive.
    Returns (parents, elems, values, truncated) with one array per depth.
    """
    E = len(elements)
    cells = [np.asarray(P, dtype=np.int64) for P in elements]
    owner = np.full(n_cells, -1, dtype=np.int64)
    for p, c in enumerate(cells):
        owner[c] = p
    inside = np.flatnonzero(owner >= 0)
    member = sp.csr_matrix((np.ones(inside.size), (inside, owner[inside])), shape=(n_cells, E))
    rows = [op[c] for c in cells]
    vals0 = np.array([float(start[p].sum()) * leaf_weight[p] for p in range(E)])
    live = np.flatnonzero(vals0 > 0)
    if live.size > budget:
        return [], [], [], True
    parents = [np.full(live.size, -1, dtype=np.int64)]
    elems = [live.astype(np.int64)]
    values = [vals0[live]]
    # frontier: element -> (node ids at the current depth, stacked vectors)
    frontier = {int(p): (np.array([i]), start[p][None, :]) for i, p in enumerate(live)}
    for _ in range(1, n_max):
        par_l, el_l, val_l, vec_l = [], [], [], []
        count = 0
        for p in sorted(frontier):
            ids, V = frontier[p]
            for lo in range(0, len(ids), chunk):
                Y = np.asarray((rows[p].T @ V[lo:lo + chunk].T).T)  # (k, n_cells)
                if binary:
                    Y = (Y > 0).astype(float)
                vals = np.asarray((member.T @ Y.T).T) * leaf_weight[None, :]  # (k, E)
                r, b = np.nonzero(vals > 0)
                count += r.size
                if count > budget:
                    return parents, elems, values, True
                par_l.append(ids[lo:lo + chunk][r])
                el_l.append(b)
                val_l.append(vals[r, b])
                vec_l.append((Y, r, b))
        if count == 0:
            break
        par = np.concatenate(par_l)
        el = np.concatenate(el_l)
        val = np.concatenate(val_l)
        order = np.lexsort((el, par))  # canonical order: by parent, then element
        new_id = np.empty_like(order)
        new_id[order] = np.arange(order.size)
        parents.append(par[order])
        elems.append(el[order])
        values.append(val[order])
        grouped: dict[int, tuple[list, list]] = {}
        offset = 0
        for Y, r, b in vec_l:
            for bb in np.unique(b):
                sel = np.flatnonzero(b == bb)
                g = grouped.setdefault(int(bb), ([], []))
                g[0].append(new_id[offset + sel])
                g[1].append(Y[np.ix_(r[sel], cells[bb])])
            offset += r.size
        frontier = {bb: (np.concatenate(i), np.concatenate(v, axis=0)) for bb, (i, v) in grouped.items()}
    return parents, elems, values, False


def word_masses(C: InvariantPartition, acs: AdmissibleControlSet, eta: np.ndarray, rho: float, n_max: int,
                dz: Discretization, budget: int = 200_000) -> WordTree:
    """Cylinder masses mu(D_a) of admissible words a up to depth n_max (mass > 0)."""
    start = [np.asarray(eta, dtype=float)[list(P)] for P in C.elements]
    par, el, ms, trunc = _expand(C.elements, start, acs.operator, acs.mass, dz.grid.n, n_max, budget)
    return WordTree(C.tau, float(rho), par, el, ms, trunc, n_max)


def adm1_counts(C: InvariantPartition, dz: Discretization, eta: np.ndarray, n_max: int,
                budget: int = 200_000) -> list[int]:
    """Number of words admissible with the fixed feedback u_a (positive eta-mass following F), per depth."""
    n = dz.grid.n
    op = sp.csr_matrix((n, n))
    for P, F in zip(C.elements, C.feedback):
        U = word_operator(dz, F, C.region)
        mask = np.zeros(n)
        mask[list(P)] = 1.0
        op = op + sp.diags(mask) @ U
    start = [np.asarray(eta, dtype=float)[list(P)] for P in C.elements]
    _, el, _, _ = _expand(C.elements, start, op.tocsr(), np.ones(len(C.elements)), n, n_max, budget, binary=True)
    return [len(e) for e in el]


# ---------------------------------------------------------------- entropy reports


@dataclass(frozen=True)
class EntropyReport:
    kind: str
    tau: int
    H: tuple[float, ...]  # H_n for n = 1..depth (cumulative conditional sums for the incremental kind)
    rate: tuple[float, ...]  # H_n / (n tau)
    estimate: float
    window: tuple[int, int]
    window_min: float
    truncated: bool = False
    infeasible: bool = False

    @staticmethod
    def infinite(kind: str, tau: int) -> "EntropyReport":
        return EntropyReport(kind, tau, (), (), math.inf, (0, 0), math.inf, False, True)


def _window(depth: int) -> tuple[int, int]:
    return (max(1, math.ceil(depth / 2)), depth)


def _report(kind: str, tau: int, H: Sequence[float], truncated: bool) -> EntropyReport:
    depth = len(H)
    if depth == 0:
        return EntropyReport(kind, tau, (), (), 0.0, (0, 0), 0.0, truncated, False)
    rate = tuple(h / (n * tau) for n, h in enumerate(H, start=1))
    lo, hi = _window(depth)
    tail = rate[lo - 1:hi]
    return EntropyReport(kind, tau, tuple(H), rate, max(tail), (lo, hi), min(tail), truncated, False)


def scaled_masses(tree: WordTree, n: int) -> list[float]:
    scale = tree.rho ** (-(n - 1) * tree.tau)
    return [float(x) * scale for x in tree.mass[n - 1]]


def metric_entropy(tree: WordTree, rho: float | None = None, tau: int | None = None) -> EntropyReport:
    """H_n = -sum_a phi(rho^{-(n-1) tau} mass(a)); estimate = max of H_n/(n tau) over the tail window."""
    if rho is not None and rho != tree.rho or tau is not None and tau != tree.tau:
        raise ValueError("rho/tau differ from the tree's")
    H = [entropy_of(scaled_masses(tree, n)) for n in range(1, tree.depth + 1)]
    return _report("metric", tree.tau, H, tree.truncated)


def conditional_terms(tree: WordTree) -> list[float]:
    """H(A_{j+1} | A_j^{j+1}) under rho^{-j tau} mu, for j = 0..depth-1 (j = 0 conditions on U x Q)."""
    rho, tau = tree.rho, tree.tau
    terms = []
    for j in range(0, tree.depth):
        child = tree.mass[j]
        if j == 0:
            groups = [child]
        else:
            par = tree.parent[j]
            order = np.argsort(par, kind="stable")
            bounds = np.flatnonzero(np.diff(par[order])) + 1
            groups = np.split(child[order], bounds)
        scale = rho ** (-j * tau)
        acc = []
        for g in groups:
            tot = math.fsum(g.tolist())
            if tot <= 0:
                continue
            acc.append(scale * tot * -math.fsum(phi(float(x) / tot) for x in g))
        terms.append(math.fsum(acc))
    return terms


def incremental_entropy(tree: WordTree, rho: float | None = None, tau: int | None = None) -> EntropyReport:
    terms = conditional_terms(tree)
    cum = list(np.cumsum(terms)) if terms else []
    return _report("incremental", tree.tau, [float(c) for c in cum], tree.truncated)


@dataclass(frozen=True)
class KOverEReport:
    n: int
    induced: float  # H over A_n^{n+1} under rho^{-n tau} mu
    base: float  # H over A_n under rho^{-n tau} mu
    K: int

    @property
    def holds(self) -> bool:
        return self.induced <= self.base + self.K / math.e + 1e-12


def k_over_e(tree: WordTree) -> list[KOverEReport]:
    """H(A_n^{n+1}) <= H(A_n) + K/e, both under rho^{-n tau} mu; K counts nodes of scaled mass > 1/e."""
    out = []
    for n in range(1, tree.depth):
        scale = tree.rho ** (-n * tree.tau)
        base_vals = [float(x) * scale for x in tree.mass[n - 1]]
        ind_vals = [float(x) * scale for x in tree.child_sums(n)]
        K = sum(v > INV_E for v in base_vals)
        out.append(KOverEReport(n, entropy_of(ind_vals), entropy_of(base_vals), K))
    return out


@dataclass(frozen=True)
class MassInvariants:
    budget: tuple[float, ...]  # rho^{-(n-1) tau} * sum of depth-n masses
    nesting: tuple[float, ...]  # sum_{n+1} - rho^tau * sum_n

    def holds(self, slack: float = 1e-9) -> bool:
        return all(b <= 1 + slack for b in self.budget) and all(d <= slack for d in self.nesting)


def mass_invariants(tree: WordTree) -> MassInvariants:
    sums = [tree.mass_sum(n) for n in range(1, tree.depth + 1)]
    budget = tuple(s * tree.scale(n) for n, s in enumerate(sums, start=1))
    nest = tuple(sums[i + 1] - tree.rho ** tree.tau * sums[i] for i in range(len(sums) - 1))
    return MassInvariants(budget, nest)


# ---------------------------------------------------------------- topological count


@dataclass(frozen=True)
class TopologicalReport:
    tau: int
    counts: tuple[int, ...]
    h_top: float
    truncated: bool


def topological_count(C: InvariantPartition, acs: AdmissibleControlSet, dz: Discretization, n_max: int,
                      budget: int = 200_000) -> TopologicalReport:
    """#W_n: words realised by some cell path whose step from P uses a word of V_P.

    Starts from all cells of each element (existence, not eta-positivity).
    """
    pattern = acs.operator.copy()
    pattern.data = (pattern.data > 0).astype(float)
    start = [np.ones(len(P)) for P in C.elements]
    _, el, _, trunc = _expand(C.elements, start, pattern, np.ones(len(C.elements)), dz.grid.n, n_max,
                              budget, binary=True)
    counts = tuple(len(e) for e in el)
    rates = [math.log(c) / (n * C.tau) for n, c in enumerate(counts, start=1) if c > 0]
    return TopologicalReport(C.tau, counts, min(rates) if rates else 0.0, trunc)


# ---------------------------------------------------------------- partition analysis and upper bounds


@dataclass(eq=False)
class PartitionAnalysis:
    partition: InvariantPartition | None
    acs: AdmissibleControlSet | None = None
    tree: WordTree | None = None
    metric: EntropyReport | None = None
    incremental: EntropyReport | None = None
    topological: TopologicalReport | None = None
    label: str = ""

    @property
    def feasible(self) -> bool:
        return self.partition is not None

    @property
    def h(self) -> float:
        return self.metric.estimate if self.metric else math.inf

    @property
    def h_inc(self) -> float:
        return self.incremental.estimate if self.incremental else math.inf


def analyze_partition(C: InvariantPartition | None, dz: Discretization, eta: np.ndarray, rho: float, n_max: int,
                      budget: int = 200_000, word_budget: int = 4096, topological: bool = True,
                      label: str = "", tau: int = 0) -> PartitionAnalysis:
    if C is None:
        return PartitionAnalysis(None, metric=EntropyReport.infinite("metric", tau),
                                 incremental=EntropyReport.infinite("incremental", tau), label=label)
    acs = admissible_control_sets(C, dz, eta, word_budget)
    tree = word_masses(C, acs, eta, rho, n_max, dz, budget)
    topo = topological_count(C, acs, dz, n_max, budget) if topological else None
    return PartitionAnalysis(C, acs, tree, metric_entropy(tree), incremental_entropy(tree), topo, label)


@dataclass(eq=False)
class UpperBound:
    """Per-tau minima of the metric entropy over a partition family: an upper bound on h_mu."""

    per_tau: dict[int, list[PartitionAnalysis]]
    label: str = "upper bound on h_mu(Q)"

    def best(self, tau: int, kind: str = "metric") -> PartitionAnalysis | None:
        runs = [a for a in self.per_tau[tau] if a.feasible]
        if not runs:
            return None
        key = (lambda a: a.h) if kind == "metric" else (lambda a: a.h_inc)
        return min(runs, key=key)

    def value(self, tau: int | None = None, kind: str = "metric") -> float:
        tau = max(self.per_tau) if tau is None else tau
        b = self.best(tau, kind)
        if b is None:
            return math.inf
        return b.h if kind == "metric" else b.h_inc

    def minima(self, kind: str = "metric") -> dict[int, float]:
        return {t: self.value(t, kind) for t in sorted(self.per_tau)}

    def all(self) -> list[PartitionAnalysis]:
        return [a for t in sorted(self.per_tau) for a in self.per_tau[t]]


def entropy_upper_bound(dz: Discretization, eta: np.ndarray, rho: float, tau_list: Sequence[int],
                        coarseness_list: Sequence[int], n_max: int, region=None, rule: str = LEX,
                        budget: int = 200_000, word_budget: int = 4096, support_tol: float = 0.0,
                        extra: Callable[[int], Iterable[InvariantPartition]] | None = None,
                        topological: bool = True) -> UpperBound:
    """Run every (tau, coarseness) partition, plus optional extra partitions per tau, and keep all analyses."""
    per_tau: dict[int, list[PartitionAnalysis]] = {}
    for tau in tau_list:
        runs = []
        for c in coarseness_list:
            C = build_invariant_partition(dz, eta, tau, c, region, rule, support_tol, word_budget)
            runs.append(analyze_partition(C, dz, eta, rho, n_max, budget, word_budget, topological,
                                          label=f"tau={tau},coarseness={c}", tau=tau))
        if extra is not None:
            for k, C in enumerate(extra(tau)):
                runs.append(analyze_partition(C, dz, eta, rho, n_max, budget, word_budget, topological,
                                              label=f"tau={tau},extra={k}", tau=tau))
        per_tau[tau] = runs
    return UpperBound(per_tau)


# ---------------------------------------------------------------- coder-controllers


@dataclass(frozen=True)
class CoderController:
    tau: int
    symbols: tuple[int, ...]
    cell_symbol: tuple[int, ...]  # symbol of every grid cell; cells outside the partition use the nearest element
    controller: dict[int, tuple[int, ...]]  # symbol -> tau-step node word F(P_s)


def coder_controller_from_partition(C: InvariantPartition, n_cells: int | None = None) -> CoderController:
    n_cells = max(max(P) for P in C.elements) + 1 if n_cells is None else n_cells
    owner = np.full(n_cells, -1, dtype=np.int64)
    for s, P in enumerate(C.elements):
        owner[list(P)] = s
    assigned = np.flatnonzero(owner >= 0)
    filled = owner.copy()
    for c in np.flatnonzero(owner < 0):
        filled[c] = owner[assigned[np.argmin(np.abs(assigned - c))]]
    return CoderController(C.tau, tuple(range(len(C.elements))), tuple(int(v) for v in filled),
                           {s: tuple(F) for s, F in enumerate(C.feedback)})


def entropy_via_coder(cc: CoderController, tree: WordTree, rho: float, tau: int) -> EntropyReport:
    """R(H) from lambda_k(s) = rho^{-(k-1) tau} mu(D_s) over admissible symbol strings s."""
    if tau != cc.tau:
        raise ValueError("coder-controller and tree use different tau")
    H = []
    # walk symbol strings: each string extends its parent string by one symbol
    strings: list[tuple[int, ...]] = []
    for k in range(1, tree.depth + 1):
        par, sym, mass = tree.parent[k - 1], tree.elem[k - 1], tree.mass[k - 1]
        strings = [((strings[int(p)] if k > 1 else ()) + (int(s),)) for p, s in zip(par, sym)]
        lam = {}
        weight = rho ** (-(k - 1) * tau)
        for s, mu in zip(strings, mass):
            lam[s] = float(mu) * weight
        H.append(entropy_of(lam.values()))
    return _report("coder", tau, H, tree.truncated)


@dataclass(frozen=True)
class LoopResult:
    exit_fraction: float
    symbol_log: np.ndarray  # (trials, steps), -1 after exit
    uncoded_steps: int


def simulate_loop(cc: CoderController, dz: Discretization, eta: np.ndarray, steps: int, trials: int,
                  seed: int = 0) -> LoopResult:
    """Closed loop from eta-distributed initial states: code the cell, apply F(P_s), repeat."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    grid, spec, quad = dz.grid, dz.spec, dz.quad
    p = np.asarray(eta, dtype=float) / np.sum(eta)
    cells = rng.choice(grid.n, size=trials, p=p)
    if grid.finite:
        x = np.array(grid.states, dtype=np.int64)[cells]
    else:
        lo = grid.edges[cells]
        x = lo + rng.uniform(0.0, 1.0, size=trials) * grid.width
        if grid.circle:
            x = np.mod(x, 1.0)
    symbol_of = np.asarray(cc.cell_symbol, dtype=np.int64)
    words = np.array([cc.controller[s] for s in cc.symbols], dtype=np.int64)
    node_vals = np.asarray(quad.nodes, dtype=object)
    alive = np.ones(trials, dtype=bool)
    log = np.full((trials, steps), -1, dtype=np.int64)
    uncoded = 0
    for t in range(steps):
        c = grid.cell_of(x)
        sym = np.where(alive, symbol_of[np.where(c < 0, 0, c)], -1)
        log[:, t] = sym
        for j in range(cc.tau):
            nxt = x.copy()
            for s in np.unique(sym[alive]):
                sel = alive & (sym == s)
                nxt[sel] = spec.apply(x[sel], node_vals[words[s, j]])
            x = nxt
            alive &= grid.cell_of(x) >= 0
    return LoopResult(float(np.mean(~alive)), log, uncoded)


@dataclass(frozen=True)
class FamilySettings:
    """Partition family and enumeration limits shared by the entropy runs."""

    tau_list: tuple[int, ...] = (1, 2, 3)
    coarseness_list: tuple[int, ...] = (1, 8, 64, 512)
    n_max: int = 8
    node_budget: int = 200_000
    word_budget: int = 4096
    rule: str = LEX
    support_tol: float = 0.0
    topological: bool = True

    @property
    def n_min(self) -> int:
        return _window(self.n_max)[0]

    def upper_bound(self, dz: Discretization, eta: np.ndarray, rho: float, region=None,
                    extra: Callable[[int], Iterable[InvariantPartition]] | None = None) -> UpperBound:
        return entropy_upper_bound(dz, eta, rho, self.tau_list, self.coarseness_list, self.n_max, region,
                                   self.rule, self.node_budget, self.word_budget, self.support_tol, extra,
                                   self.topological)

    def analyze(self, C: InvariantPartition | None, dz: Discretization, eta: np.ndarray, rho: float,
                label: str = "", tau: int = 0) -> PartitionAnalysis:
        return analyze_partition(C, dz, eta, rho, self.n_max, self.node_budget, self.word_budget,
                                 self.topological, label, tau)
