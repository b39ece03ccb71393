"""Invariant (Q, eta)-partitions: cell blocks with tau-step feedback words keeping them in the region."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .controlsets import CellSet, SteeringCover, cellset, invariant_in_q
from .discretization import OUTSIDE, Discretization, all_words, word_survival

LEX = "lex"
MAX_MARGIN = "max_margin"


class PreconditionError(ValueError):
    """An operation was called outside its stated hypotheses."""


@dataclass(frozen=True)
class InvariantPartition:
    tau: int
    elements: tuple[CellSet, ...]
    feedback: tuple[tuple[int, ...], ...]
    null_cells: CellSet
    region: CellSet
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        for w in self.feedback:
            if len(w) != self.tau:
                raise ValueError(f"feedback word {w} does not have length tau={self.tau}")
        seen: set[int] = set()
        for P in self.elements:
            if seen & set(P):
                raise ValueError("partition elements overlap")
            seen |= set(P)
        if seen & set(self.null_cells):
            raise ValueError("null cells overlap the elements")

    def element_of(self, n_cells: int) -> np.ndarray:
        out = np.full(n_cells, -1, dtype=np.int64)
        for i, P in enumerate(self.elements):
            out[list(P)] = i
        return out

    def __len__(self) -> int:
        return len(self.elements)


def positive_cells(eta: np.ndarray, region: Iterable[int] | None = None, tol: float = 0.0) -> CellSet:
    cells = np.flatnonzero(eta > tol)
    if region is not None:
        cells = np.intersect1d(cells, np.asarray(list(region), dtype=np.int64))
    return cellset(cells)


def _region(dz: Discretization, region: Iterable[int] | None) -> CellSet:
    return cellset(range(dz.grid.n)) if region is None else cellset(region)


@lru_cache(maxsize=64)
def _survival_cached(dz: Discretization, tau: int, region: CellSet, budget: int):
    return word_survival(dz.spec, dz.grid, dz.quad, tau, region=region, budget=budget, with_margin=True)


def survival_table(dz: Discretization, tau: int, region: Iterable[int] | None = None, budget: int = 4096):
    """(keep, margin): per cell and word, do all samples stay in the region for tau steps, and how far from its boundary."""
    return _survival_cached(dz, int(tau), _region(dz, region), int(budget))


def feasible_words(dz: Discretization, cells: Sequence[int], tau: int, region=None, budget: int = 4096) -> np.ndarray:
    """Indices (lexicographic) of words keeping every sample of every given cell in the region."""
    keep, _ = survival_table(dz, tau, region, budget)
    if len(cells) == 0:
        return np.arange(keep.shape[1])
    return np.flatnonzero(keep[list(cells)].all(axis=0))


def synthesize_feedback(dz: Discretization, P: Sequence[int], tau: int, region=None, rule: str = LEX,
                        budget: int = 4096) -> tuple[int, ...] | None:
    """Feedback word for block P: lexicographically first feasible word, or the max-margin one. None if infeasible."""
    keep, margin = survival_table(dz, tau, region, budget)
    ok = feasible_words(dz, P, tau, region, budget)
    if ok.size == 0:
        return None
    if rule == LEX:
        best = int(ok[0])
    elif rule == MAX_MARGIN:
        marg = margin[list(P)][:, ok].min(axis=0)
        best = int(ok[int(np.argmax(marg))])  # argmax keeps the first maximizer
    else:
        raise ValueError(f"unknown feedback rule {rule!r}")
    return tuple(int(v) for v in all_words(dz.quad.m, tau)[best])


def build_invariant_partition(dz: Discretization, eta: np.ndarray, tau: int, coarseness: int,
                              region=None, rule: str = LEX, support_tol: float = 0.0,
                              budget: int = 4096) -> InvariantPartition | None:
    """Blocks of ``coarseness`` consecutive eta-positive cells, each with a feedback word.

    An infeasible block is split into singletons; None (entropy infinity) if a singleton is infeasible.
    """
    if coarseness < 1:
        raise ValueError(f"coarseness must be >= 1, got {coarseness}")
    reg = _region(dz, region)
    pos = positive_cells(eta, reg, support_tol)
    elements: list[CellSet] = []
    feedback: list[tuple[int, ...]] = []
    splits = 0
    for start in range(0, len(pos), coarseness):
        block = pos[start:start + coarseness]
        word = synthesize_feedback(dz, block, tau, reg, rule, budget)
        if word is not None:
            elements.append(cellset(block))
            feedback.append(word)
            continue
        splits += 1
        for c in block:
            w = synthesize_feedback(dz, [c], tau, reg, rule, budget)
            if w is None:
                return None
            elements.append((c,))
            feedback.append(w)
    null = cellset(set(reg) - set(pos))
    return InvariantPartition(tau, tuple(elements), tuple(feedback), null, reg,
                              {"coarseness": coarseness, "rule": rule, "split_blocks": splits})


def sample_paths(dz: Discretization, cells: Sequence[int], word: Sequence[int]) -> np.ndarray:
    """Sample trajectories of the given cells under a node word, shape (len(word)+1, cells, s)."""
    pts = dz.grid.samples[list(cells)]
    out = [pts]
    x = pts.ravel()
    for k in word:
        x = dz.spec.apply(x, dz.quad.nodes[k])
        out.append(x.reshape(pts.shape))
    return np.stack(out)


def validate_partition(C: InvariantPartition, dz: Discretization) -> list[tuple[int, int]]:
    """(element, cell) pairs whose samples leave the region at some step 1..tau under F(P)."""
    inreg = np.zeros(dz.grid.n + 1, dtype=bool)
    inreg[list(C.region)] = True
    bad = []
    for i, (P, w) in enumerate(zip(C.elements, C.feedback)):
        cells = dz.grid.cell_of(sample_paths(dz, P, w)[1:])
        ok = inreg[cells].all(axis=(0, 2))
        bad.extend((i, c) for c, good in zip(P, ok) if not good)
    return bad


def _majority(landing: np.ndarray, elem_of: np.ndarray) -> tuple[int, bool]:
    """Element hit by most samples (ties to the lower index) and whether the samples straddle."""
    labels = np.where(landing == OUTSIDE, -1, elem_of[np.where(landing == OUTSIDE, 0, landing)])
    labels = labels[labels >= 0]
    if labels.size == 0:
        return -1, True
    vals, counts = np.unique(labels, return_counts=True)
    return int(vals[np.argmax(counts)]), len(vals) > 1 or labels.size < landing.size


def square_partition(C: InvariantPartition, dz: Discretization) -> InvariantPartition:
    """C_{2 tau}: P_ij = cells of P_i whose tau-step image under F(P_i) lies in P_j (sample majority)."""
    elem_of = C.element_of(dz.grid.n)
    groups: dict[tuple[int, int], list[int]] = {}
    straddle = 0
    orphans = []
    for i, (P, w) in enumerate(zip(C.elements, C.feedback)):
        land = dz.grid.cell_of(sample_paths(dz, P, w)[-1])
        for c, row in zip(P, land):
            j, st = _majority(row, elem_of)
            straddle += st
            if j < 0:
                orphans.append(c)
                continue
            groups.setdefault((i, j), []).append(c)
    keys = sorted(groups)
    elements = tuple(cellset(groups[k]) for k in keys)
    feedback = tuple(C.feedback[i] + C.feedback[j] for i, j in keys)
    null = cellset(set(C.null_cells) | set(orphans))
    return InvariantPartition(2 * C.tau, elements, feedback, null, C.region,
                              {**C.diagnostics, "squared_from": C.tau, "straddling_cells": straddle,
                               "orphan_cells": len(orphans)})


def restrict_to_k(C: InvariantPartition, K: Iterable[int], dz: Discretization, eta: np.ndarray,
                  support_tol: float = 0.0) -> InvariantPartition:
    """Elements P ∩ K with inherited feedback; elements without eta-positive cells in K dropped.

    The containment region stays that of C, so the admissible words of P ∩ K are those of P.
    """
    K = cellset(K)
    if not K:
        raise PreconditionError("K is empty")
    rep = invariant_in_q(dz, K)
    if not rep.holds:
        raise PreconditionError(f"K is not invariant in Q, e.g. {rep.violations[0]} (cell, node, image)")
    Kset = set(K)
    elements, feedback = [], []
    for P, w in zip(C.elements, C.feedback):
        cut = [c for c in P if c in Kset]
        if any(eta[c] > support_tol for c in cut):
            elements.append(cellset(cut))
            feedback.append(w)
    covered = set().union(*elements) if elements else set()
    null = cellset(Kset - covered)
    # words stay those keeping P in Q: for cells of K invariance makes them keep P in K
    return InvariantPartition(C.tau, tuple(elements), tuple(feedback), null, C.region,
                              {**C.diagnostics, "restricted_to": K})


def extend_from_k(C_K: InvariantPartition, cover: SteeringCover, dz: Discretization,
                  eta: np.ndarray | None = None) -> InvariantPartition:
    """Extend a K-partition to Q: cells steered into P_i by cover word v_j get v_j + F(P_i)[:tau - tau_j]."""
    if not cover.total:
        raise PreconditionError(f"steering cover misses cells {list(cover.unreachable)}")
    K = set(C_K.diagnostics.get("restricted_to", C_K.region))
    used = [(cells, w, t) for cells, w, t in cover.elements if set(cells) - K]
    tbar = max((t for _, _, t in used), default=0)
    if C_K.tau < tbar:
        raise PreconditionError(f"tau={C_K.tau} is below the maximal steering time {tbar}")
    elem_of = C_K.element_of(dz.grid.n)
    new: dict[tuple[int, int], list[int]] = {}
    orphans = []
    for j, (cells, w, t) in enumerate(used):
        out = [c for c in cells if c not in K]
        land = dz.grid.cell_of(sample_paths(dz, out, w)[-1])
        for c, row in zip(out, land):
            i, _ = _majority(row, elem_of)
            if i < 0:
                orphans.append(c)
            else:
                new.setdefault((i, j), []).append(c)
    if orphans and eta is not None and any(eta[c] > 0 for c in orphans):
        raise PreconditionError(f"cells {orphans} are steered into K but not into any element of C_K")
    keys = sorted(new)
    elements = C_K.elements + tuple(cellset(new[k]) for k in keys)
    feedback = C_K.feedback + tuple(used[j][1] + C_K.feedback[i][:C_K.tau - used[j][2]] for i, j in keys)
    region = cellset(range(dz.grid.n))
    covered = set().union(*elements) if elements else set()
    null = cellset(set(region) - covered)
    N = len(used)
    return InvariantPartition(C_K.tau, elements, feedback, null, region,
                              {**C_K.diagnostics, "extended": True, "cover_elements": N,
                               "count_bound": (1 + N) * len(C_K.elements)})
