"""Pass/fail property checks composing the discretization, partition and entropy layers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .controlsets import (CellSet, ControlSetResult, cellset, exits_through_boundary, find_w_control_sets,
                          invariant_in_q, steering_cover)
from .discretization import (CellGrid, ControlQuadrature, Discretization, build_grid, discretize,
                             finite_grid)
from .entropy import FamilySettings, PartitionAnalysis, UpperBound
from .partitions import (InvariantPartition, PreconditionError, build_invariant_partition, extend_from_k,
                         restrict_to_k)
from .qsm import QuasiStationaryMeasure, power_qsm
from .systems import SystemSpec, relabel

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
FLOAT_SLACK = 1e-12
NONSINGULAR = {"nonsingularity": "assumed (no finite certificate at grid level)"}


@dataclass(frozen=True)
class TheoremReport:
    theorem: str
    verdict: str
    quantities: dict = field(default_factory=dict)
    tolerance: float | None = None
    reason: str = ""
    assumptions: dict = field(default_factory=dict)
    artifacts: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_json(self) -> dict:
        return _jsonable(asdict(self))

    def line(self) -> str:
        why = f" ({self.reason})" if self.reason else ""
        return f"{self.theorem:<24} {self.verdict.upper():<8}{why}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("infinity" if x > 0 else "-infinity" if x < 0 else "nan")
    return x


def _report(theorem: str, ok: bool, quantities: dict, tol=None, reason: str = "", assumptions=None):
    return TheoremReport(theorem, PASS if ok else FAIL, quantities, tol, "" if ok else reason, assumptions or {})


def _skip(theorem: str, reason: str, quantities: dict | None = None, assumptions=None) -> TheoremReport:
    return TheoremReport(theorem, SKIPPED, quantities or {}, None, reason, assumptions or {})


def finite_n_slack(s: FamilySettings, tau: int) -> float:
    """The 3/e correction of the restriction argument, per unit time at the start of the tail window."""
    return 3.0 / (math.e * s.n_min * tau)


# ---------------------------------------------------------------- partition families over K and Q


def k_bound(dz: Discretization, eta: np.ndarray, rho: float, K: Iterable[int], s: FamilySettings,
            q_bound: UpperBound | None = None) -> UpperBound:
    """Partitions of K: restrictions of the Q-family plus partitions built directly on K."""
    K = cellset(K)
    per_tau: dict[int, list[PartitionAnalysis]] = {}
    for tau in s.tau_list:
        runs = []
        if q_bound is not None:
            for a in q_bound.per_tau.get(tau, []):
                if a.feasible and a.partition.diagnostics.get("restricted_to") is None:
                    CK = restrict_to_k(a.partition, K, dz, eta, s.support_tol)
                    if CK.elements:
                        runs.append(s.analyze(CK, dz, eta, rho, label=f"{a.label}|K"))
        for c in s.coarseness_list:
            C = build_invariant_partition(dz, eta, tau, c, K, s.rule, s.support_tol, s.word_budget)
            if C is not None and not C.elements:
                C = None
            runs.append(s.analyze(C, dz, eta, rho, label=f"tau={tau},coarseness={c},region=K", tau=tau))
        per_tau[tau] = runs
    return UpperBound(per_tau, label="upper bound on h_mu(K)")


def extensions(dz: Discretization, eta: np.ndarray, rho: float, kb: UpperBound, cover, s: FamilySettings) -> dict:
    """Extensions of the K-family to Q through a steering cover, wherever tau covers the steering times."""
    out: dict[int, list[PartitionAnalysis]] = {}
    if not cover.total:
        return out
    for tau, runs in kb.per_tau.items():
        if tau < cover.max_time:
            continue
        for a in runs:
            if not a.feasible:
                continue
            try:
                CQ = extend_from_k(a.partition, cover, dz, eta)
                out.setdefault(tau, []).append(s.analyze(CQ, dz, eta, rho, label=f"{a.label}->Q"))
            except (PreconditionError, ValueError):
                continue
    return out


def merged(base: UpperBound, extra: dict) -> UpperBound:
    per_tau = {t: list(v) + list(extra.get(t, [])) for t, v in base.per_tau.items()}
    return UpperBound(per_tau, base.label)


# ---------------------------------------------------------------- K versus Q


def _k_vs_q(theorem: str, kind: str, dz: Discretization, eta: np.ndarray, rho: float, K: Iterable[int],
            s: FamilySettings, tol: float | None, q_bound: UpperBound | None, equality: bool) -> TheoremReport:
    K = cellset(K)
    inv = invariant_in_q(dz, K)
    if not inv.holds:
        c, node, img = inv.violations[0]
        return _skip(theorem, f"K is not invariant in Q: cell {c} leaves K into cell {img} under node {node}",
                     {"witness": [c, node, img]})
    qb = s.upper_bound(dz, eta, rho) if q_bound is None else q_bound
    kb = k_bound(dz, eta, rho, K, s, qb)
    q = {"per_tau": {}, "kind": kind}
    ok = True
    for tau in s.tau_list:
        hQ, hK = qb.value(tau, kind), kb.value(tau, kind)
        slack = finite_n_slack(s, tau)
        holds = hK <= hQ + slack
        ok &= holds
        q["per_tau"][tau] = {"h_K": hK, "h_Q": hQ, "slack": slack, "holds": holds}
    reason = "h(K) exceeds h(Q) + slack"
    assumptions = {}
    if equality:
        cover = steering_cover(dz, K)
        q["steering_total"] = cover.total
        if cover.total:
            qe = merged(qb, extensions(dz, eta, rho, kb, cover, s))
            tau = max(s.tau_list)
            hQ, hK = qe.value(tau, kind), kb.value(tau, kind)
            eq = abs(hK - hQ) <= tol if math.isfinite(hQ) and math.isfinite(hK) else hK == hQ
            q["equality"] = {"tau": tau, "h_K": hK, "h_Q": hQ, "difference": abs(hK - hQ), "holds": eq,
                             "steering_max_time": cover.max_time}
            if not eq:
                reason = f"|h(K) - h(Q)| = {abs(hK - hQ):.4g} > {tol}"
            ok &= eq
            assumptions = NONSINGULAR
    return _report(theorem, ok, q, tol, reason, assumptions)


def check_k_vs_q(dz: Discretization, eta: np.ndarray, rho: float, K: Iterable[int], s: FamilySettings,
                 tol: float = 0.05, q_bound: UpperBound | None = None) -> TheoremReport:
    """h(K) <= h(Q) + 3/(e n tau) for every tau; with a total steering cover also |h(K) - h(Q)| <= tol."""
    return _k_vs_q("k_vs_q", "metric", dz, eta, rho, K, s, tol, q_bound, equality=True)


def check_incremental_k_vs_q(dz: Discretization, eta: np.ndarray, rho: float, K: Iterable[int],
                             s: FamilySettings, q_bound: UpperBound | None = None) -> TheoremReport:
    return _k_vs_q("incremental_k_vs_q", "incremental", dz, eta, rho, K, s, None, q_bound, equality=False)


# ---------------------------------------------------------------- disjoint invariant components


def qsm_residual_on(dz: Discretization, eta: np.ndarray, rho: float, comp: Sequence[int]) -> float:
    """|rho eta_i - eta_i P|_inf on the component, eta_i the normalised restriction of eta."""
    idx = np.asarray(comp, dtype=np.int64)
    ei = np.zeros_like(eta)
    ei[idx] = eta[idx] / eta[idx].sum()
    img = dz.ulam.matrix.T @ ei
    return float(np.max(np.abs(rho * ei[idx] - img[idx])))


def check_disjoint_union(dz: Discretization, eta: np.ndarray, rho: float, components: Sequence[Iterable[int]],
                         s: FamilySettings) -> TheoremReport:
    """Weighted entropies of disjoint invariant components bracket the entropy of their union.

    Per n: max_i c_i H_n^i <= H_n(Q) <= sum_i c_i H_n^i + sum_i (-c_i log c_i), with c_i = eta(Q_i).
    The last term is the finite-n mixing entropy; divided by n tau it vanishes in the limit.
    """
    name = "disjoint_union"
    comps = [cellset(c) for c in components]
    seen: set[int] = set()
    for c in comps:
        if seen & set(c):
            return _skip(name, "components overlap")
        seen |= set(c)
    for c in comps:
        rep = invariant_in_q(dz, c)
        if not rep.holds:
            return _skip(name, f"component starting at cell {c[0]} is not invariant in Q", {"witness": rep.violations[0]})
    uncovered = sorted(set(np.flatnonzero(eta > 0).tolist()) - seen)
    if uncovered:
        return _skip(name, f"components do not cover supp eta, e.g. cell {uncovered[0]}",
                     {"uncovered": len(uncovered), "uncovered_mass": float(eta[uncovered].sum())})
    weights = [float(eta[list(c)].sum()) for c in comps]
    if any(w <= 0 for w in weights):
        return _skip(name, "a component carries no eta-mass", {"weights": weights})
    residuals = [qsm_residual_on(dz, eta, rho, c) for c in comps]
    mixing = -math.fsum(w * math.log(w) for w in weights)
    q = {"weights": weights, "qsm_residuals": residuals, "mixing": mixing, "runs": []}
    ok = all(r < 1e-9 for r in residuals)
    reason = "" if ok else "conditional measure is not quasi-stationary with the same rho"
    cond = []
    for c in comps:
        e = np.zeros_like(eta)
        e[list(c)] = eta[list(c)] / eta[list(c)].sum()
        cond.append(e)
    for tau in s.tau_list:
        for coarse in s.coarseness_list:
            parts = []
            for c in comps:
                masked = np.zeros_like(eta)
                masked[list(c)] = eta[list(c)]
                parts.append(build_invariant_partition(dz, masked, tau, coarse, None, s.rule, s.support_tol,
                                                       s.word_budget))
            if any(p is None for p in parts):
                q["runs"].append({"tau": tau, "coarseness": coarse, "feasible": False})
                continue
            elements = sum((p.elements for p in parts), ())
            feedback = sum((p.feedback for p in parts), ())
            region = cellset(range(dz.grid.n))
            union = InvariantPartition(tau, elements, feedback, cellset(set(region) - set().union(*elements)),
                                       region, {"coarseness": coarse, "union_of": len(parts)})
            aQ = s.analyze(union, dz, eta, rho)
            ai = [s.analyze(p, dz, e, rho) for p, e in zip(parts, cond)]
            depth = min([aQ.tree.depth] + [a.tree.depth for a in ai])
            lower_ok = upper_ok = True
            for n in range(1, depth + 1):
                HQ = aQ.metric.H[n - 1]
                Hi = [w * a.metric.H[n - 1] for w, a in zip(weights, ai)]
                lower_ok &= max(Hi) <= HQ + FLOAT_SLACK
                upper_ok &= HQ <= math.fsum(Hi) + mixing + FLOAT_SLACK
            hQ = aQ.h
            hi = [w * a.h for w, a in zip(weights, ai)]
            rate_mix = mixing / (aQ.metric.window[0] * tau) if aQ.metric.window[0] else mixing
            rate_ok = max(hi) <= hQ + FLOAT_SLACK and hQ <= math.fsum(hi) + rate_mix + FLOAT_SLACK
            run_ok = lower_ok and upper_ok and rate_ok
            ok &= run_ok
            if not run_ok and not reason:
                reason = f"bracket violated at tau={tau}, coarseness={coarse}"
            q["runs"].append({"tau": tau, "coarseness": coarse, "feasible": True, "depth": depth, "h_Q": hQ,
                              "weighted_h": hi, "per_n_lower": lower_ok, "per_n_upper": upper_ok,
                              "rate_bracket": rate_ok})
    return _report(name, ok, q, 0.0, reason)


# ---------------------------------------------------------------- comparison with the topological count


def comparison_of(a: PartitionAnalysis) -> dict:
    """H_n against log #W_n (exact), log(#nodes_n) and log(#W_n + 1) for one analysed partition."""
    H = a.metric.H
    counts = a.topological.counts
    depth = min(len(H), len(counts))
    rows = []
    for n in range(1, depth + 1):
        h, w = H[n - 1], counts[n - 1]
        nodes = len(a.tree.mass[n - 1])
        rows.append({"n": n, "H": h, "log_W": math.log(w), "nodes": nodes, "W": w,
                     "holds": h <= math.log(w), "holds_nodes": h <= math.log(nodes) + FLOAT_SLACK,
                     "holds_with_residual": h <= math.log(w + 1) + FLOAT_SLACK})
    return {"label": a.label, "rows": rows, "holds": all(r["holds"] for r in rows),
            "holds_with_residual": all(r["holds_with_residual"] for r in rows)}


def check_comparison_runs(analyses: Iterable[PartitionAnalysis]) -> TheoremReport:
    runs = [comparison_of(a) for a in analyses if a.feasible and a.topological is not None]
    if not runs:
        return _skip("comparison", "no feasible partition")
    ok = all(r["holds"] for r in runs)
    bad = [r for r in runs if not r["holds"]]
    reason = ""
    if bad:
        row = next(x for x in bad[0]["rows"] if not x["holds"])
        reason = f"{bad[0]['label']}: H_{row['n']} = {row['H']:.6g} > log #W_n = {row['log_W']:.6g}"
    return _report("comparison", ok, {"runs": runs}, 0.0, reason)


def check_comparison(dz: Discretization, eta: np.ndarray, rho: float, tau: int, coarseness: int,
                     s: FamilySettings) -> TheoremReport:
    """H_n <= log #W_n for every computed n (no tolerance) on one partition."""
    C = build_invariant_partition(dz, eta, tau, coarseness, None, s.rule, s.support_tol, s.word_budget)
    if C is None:
        return _skip("comparison", "no invariant partition at this tau and coarseness")
    return check_comparison_runs([replace(s, topological=True).analyze(C, dz, eta, rho,
                                                                       f"tau={tau},coarseness={coarseness}")])


# ---------------------------------------------------------------- support


def check_support(dz: Discretization, qsm: QuasiStationaryMeasure, control_sets: Sequence[ControlSetResult],
                  threshold: float = 1e-12) -> TheoremReport:
    """Every cell of a control set meeting supp eta carries mass above threshold, up to one edge cell."""
    name = "support"
    eta = qsm.eta
    used = [D for D in control_sets if D.transitive and np.any(eta[list(D.cells)] > threshold)]
    if not used:
        return _skip(name, "no control set with transitivity cells meets supp eta")
    q = {"sets": []}
    ok = True
    for D in used:
        missing = [c for c in D.cells if eta[c] <= threshold]
        edge = {D.cells[0], D.cells[-1]}
        good = len(missing) <= 1 and set(missing) <= edge
        ok &= good
        q["sets"].append({"first": D.cells[0], "last": D.cells[-1], "size": len(D.cells), "missing": missing,
                          "min_mass": float(eta[list(D.cells)].min()), "holds": good})
    return _report(name, ok, q, threshold, "control set cells without eta-mass")


def support_outside(grid: CellGrid, eta: np.ndarray, lo: float, hi: float, threshold: float = 0.0) -> list[int]:
    """Cells carrying mass above threshold that do not lie inside [lo, hi]."""
    return [int(c) for c in np.flatnonzero(eta > threshold)
            if grid.bounds(c)[0] < lo - 1e-12 or grid.bounds(c)[1] > hi + 1e-12]


# ---------------------------------------------------------------- control sets to entropy


@dataclass(eq=False)
class TheoremBRun:
    report: TheoremReport
    control_sets: list[ControlSetResult]
    K: CellSet
    q_bound: UpperBound | None = None
    k_bound: UpperBound | None = None
    d_bounds: list[UpperBound] = field(default_factory=list)


def theorem_b_pipeline(dz: Discretization, s: FamilySettings, tol: float = 0.05,
                       qsm: QuasiStationaryMeasure | None = None) -> TheoremBRun:
    """Invariant control sets D_i, K = union of their closures; check max h(D_i) <= h(K) ~ h(Q) <= sum h(D_i)."""
    name = "theorem_b"
    qsm = power_qsm(dz.ulam) if qsm is None else qsm
    eta, rho = qsm.eta, qsm.rho
    cs = find_w_control_sets(dz.graph, dz.grid)
    inv = [D for D in cs if D.invariant]
    q: dict = {"control_sets": [{"first": D.cells[0], "last": D.cells[-1], "size": len(D.cells),
                                 "invariant": D.invariant} for D in cs], "rho": rho}
    if not inv:
        return TheoremBRun(_skip(name, "no invariant W-control set", q, NONSINGULAR), cs, ())
    if not all(D.transitive for D in inv):
        return TheoremBRun(_skip(name, "an invariant control set has no transitivity cells", q, NONSINGULAR), cs, ())
    closures = [set(D.closure) for D in inv]
    if sum(len(c) for c in closures) != len(set().union(*closures)):
        return TheoremBRun(_skip(name, "closures of the invariant control sets intersect", q, NONSINGULAR), cs, ())
    K = cellset(set().union(*closures))
    exits = exits_through_boundary(dz, K)
    if exits:
        return TheoremBRun(_skip(name, f"f(K) meets the boundary of Q outside K, e.g. {exits[0]}", q, NONSINGULAR),
                           cs, K)
    cover = steering_cover(dz, K)
    q["steering_max_time"] = cover.max_time
    if not cover.total:
        return TheoremBRun(_skip(name, f"steering cover misses cells {list(cover.unreachable)[:5]}", q,
                                 NONSINGULAR), cs, K)
    inv_rep = invariant_in_q(dz, K)
    if not inv_rep.holds:
        return TheoremBRun(_report(name, False, q, tol, f"K is not invariant in Q: {inv_rep.violations[0]}",
                                   NONSINGULAR), cs, K)
    qb0 = s.upper_bound(dz, eta, rho)
    kb = k_bound(dz, eta, rho, K, s, qb0)
    qb = merged(qb0, extensions(dz, eta, rho, kb, cover, s))
    dbs = [kb if len(inv) == 1 else k_bound(dz, eta, rho, D.closure, s, qb0) for D in inv]
    tau = max(s.tau_list)
    slack = finite_n_slack(s, tau)
    hQ, hK = qb.value(tau), kb.value(tau)
    hD = [b.value(tau) for b in dbs]
    lower = max(hD) <= hK + slack
    equal = abs(hK - hQ) <= tol if math.isfinite(hK) and math.isfinite(hQ) else hK == hQ
    upper = hQ <= math.fsum(hD) + slack
    q.update({"tau": tau, "K_size": len(K), "h_Q": hQ, "h_K": hK, "h_D": hD, "slack": slack,
              "lower": lower, "equal": equal, "upper": upper, "difference": abs(hK - hQ)})
    ok = lower and equal and upper
    reason = ("max h(D_i) > h(K)" if not lower else f"|h(K) - h(Q)| = {abs(hK - hQ):.4g} > {tol}" if not equal
              else "h(Q) > sum h(D_i) + slack")
    return TheoremBRun(_report(name, ok, q, tol, reason, NONSINGULAR), cs, K, qb, kb, dbs)


def check_theorem_b(dz: Discretization, s: FamilySettings, tol: float = 0.05,
                    qsm: QuasiStationaryMeasure | None = None) -> TheoremReport:
    return theorem_b_pipeline(dz, s, tol, qsm).report


# ---------------------------------------------------------------- conjugacy


@dataclass(frozen=True, eq=False)
class ConjugatePair:
    dz1: Discretization
    dz2: Discretization
    cell_map: np.ndarray  # cell of system 1 -> cell of system 2


def conjugate(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature, c: float = 0.0,
              perm: Sequence[int] | None = None) -> ConjugatePair:
    """The system pi f pi^{-1} on pi(Q): a circle shift by c, or a state relabelling for tables."""
    dz1 = discretize(spec, grid, quad)
    if spec.is_circle:
        if grid.full_circle:
            k = c / grid.width
            if abs(k - round(k)) > 1e-9:
                raise PreconditionError(f"shift {c} is not a multiple of the cell width {grid.width}")
        spec2 = replace(spec, shift=spec.shift + c)
        # pi(Q) gridded by pi(cells): cell i of Q maps to cell i of pi(Q)
        grid2 = build_grid(grid.qlo + c, grid.qhi + c, grid.n, grid.samples_per_cell, circle=True)
        cmap = np.arange(grid.n)
    else:
        perm = list(range(spec.state_count)) if perm is None else list(perm)
        spec2 = relabel(spec, perm)
        grid2 = finite_grid(spec2)
        cmap = grid2.cell_of(np.array([perm[s] for s in grid.states]))
    return ConjugatePair(dz1, discretize(spec2, grid2, quad), cmap)


def push_forward(C: InvariantPartition, cell_map: np.ndarray) -> InvariantPartition:
    m = lambda cells: cellset(cell_map[list(cells)]) if len(cells) else ()
    return InvariantPartition(C.tau, tuple(m(P) for P in C.elements), C.feedback, m(C.null_cells),
                              m(C.region), dict(C.diagnostics))


def check_conjugacy(spec: SystemSpec, c: float, grid: CellGrid, quad: ControlQuadrature, tau: int,
                    coarseness: int, s: FamilySettings, perm: Sequence[int] | None = None,
                    tol: float = 1e-9) -> TheoremReport:
    """Equal rho and equal H_n for a partition and its push-forward under the conjugacy."""
    name = "conjugacy"
    try:
        pair = conjugate(spec, grid, quad, c, perm)
    except PreconditionError as e:
        return _skip(name, str(e))
    q1, q2 = power_qsm(pair.dz1.ulam), power_qsm(pair.dz2.ulam)
    C1 = build_invariant_partition(pair.dz1, q1.eta, tau, coarseness, None, s.rule, s.support_tol, s.word_budget)
    if C1 is None:
        return _skip(name, "no invariant partition for the first system")
    C2 = push_forward(C1, pair.cell_map)
    s1 = replace(s, topological=False)
    a1 = s1.analyze(C1, pair.dz1, q1.eta, q1.rho)
    a2 = s1.analyze(C2, pair.dz2, q2.eta, q2.rho)
    depth = min(len(a1.metric.H), len(a2.metric.H))
    dH = max((abs(x - y) for x, y in zip(a1.metric.H, a2.metric.H)), default=0.0)
    eta_diff = float(np.max(np.abs(q1.eta - q2.eta[pair.cell_map])))
    drho = abs(q1.rho - q2.rho)
    same_depth = len(a1.metric.H) == len(a2.metric.H)
    ok = drho < tol and dH < tol and same_depth
    q = {"shift": c, "rho_1": q1.rho, "rho_2": q2.rho, "rho_difference": drho, "H_1": a1.metric.H,
         "H_2": a2.metric.H, "max_H_difference": dH, "depth": depth, "eta_difference": eta_diff}
    return _report(name, ok, q, tol, f"|rho_1 - rho_2| = {drho:.3g}, max |dH| = {dH:.3g}")


# ---------------------------------------------------------------- suites


@dataclass(frozen=True)
class SuiteSummary:
    reports: tuple[TheoremReport, ...]

    @property
    def counts(self) -> dict[str, int]:
        out = {PASS: 0, FAIL: 0, SKIPPED: 0}
        for r in self.reports:
            out[r.verdict] += 1
        return out

    @property
    def failures(self) -> int:
        return self.counts[FAIL]

    def table(self) -> str:
        lines = [r.line() for r in self.reports]
        c = self.counts
        lines.append(f"{c[PASS]} passed, {c[FAIL]} failed, {c[SKIPPED]} skipped")
        return "\n".join(lines)


CHECKS = ("support", "comparison", "k_vs_q", "incremental_k_vs_q", "theorem_b", "conjugacy", "disjoint_union")


def run_suite(dz: Discretization, s: FamilySettings, which: Sequence[str] = CHECKS, tol: float = 0.05,
              conjugacy_shift: float = 0.0, conjugacy_coarseness: int = 64, support_threshold: float = 1e-12,
              components: Sequence[Iterable[int]] | None = None) -> SuiteSummary:
    """Run the selected checks on one discretized system; K is the union of invariant control sets."""
    unknown = set(which) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    qsm = power_qsm(dz.ulam)
    eta, rho = qsm.eta, qsm.rho
    reports = []
    run = theorem_b_pipeline(dz, s, tol, qsm) if {"theorem_b", "k_vs_q", "incremental_k_vs_q"} & set(which) else None
    cs = run.control_sets if run else find_w_control_sets(dz.graph, dz.grid)
    qb = run.q_bound if run and run.q_bound is not None else None
    K = run.K if run else ()
    if not K:
        K = cellset(set().union(*[set(D.closure) for D in cs if D.invariant])) if cs else ()
    for name in which:
        if name == "support":
            reports.append(check_support(dz, qsm, cs, support_threshold))
        elif name == "comparison":
            analyses = (qb or s.upper_bound(dz, eta, rho)).all()
            reports.append(check_comparison_runs(analyses))
        elif name == "k_vs_q":
            reports.append(check_k_vs_q(dz, eta, rho, K, s, tol, qb) if K else _skip(name, "no invariant control set"))
        elif name == "incremental_k_vs_q":
            reports.append(check_incremental_k_vs_q(dz, eta, rho, K, s, qb) if K
                           else _skip(name, "no invariant control set"))
        elif name == "theorem_b":
            reports.append(run.report)
        elif name == "conjugacy":
            reports.append(check_conjugacy(dz.spec, conjugacy_shift, dz.grid, dz.quad, max(s.tau_list),
                                           conjugacy_coarseness, s))
        elif name == "disjoint_union":
            comps = components if components is not None else [D.closure for D in cs if D.invariant]
            if not comps:
                reports.append(_skip(name, "no components"))
            else:
                reports.append(check_disjoint_union(dz, eta, rho, comps, s))
    return SuiteSummary(tuple(reports))
