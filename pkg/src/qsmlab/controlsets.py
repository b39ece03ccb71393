"""W-reachable sets, W-control sets and relative invariance on the symbolic image."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .discretization import OUTSIDE, CellGrid, Discretization, SymbolicImage

CellSet = tuple[int, ...]


def cellset(cells: Iterable[int]) -> CellSet:
    return tuple(sorted({int(c) for c in cells}))


def _walk(adj: list[list[int]], start: Iterable[int]) -> CellSet:
    seen: set[int] = set()
    queue = deque()
    for c in start:
        for j in adj[c]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    while queue:
        c = queue.popleft()
        for j in adj[c]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return cellset(seen)


def reachable_w(g: SymbolicImage, start: Iterable[int]) -> CellSet:
    """Cells reached from ``start`` after at least one edge."""
    return _walk(g.successors, start)


def controllable_w(g: SymbolicImage, target: Iterable[int]) -> CellSet:
    """Cells from which ``target`` is reached after at least one edge."""
    return _walk(g.predecessors, target)


@dataclass(frozen=True)
class ControlSetResult:
    cells: CellSet
    invariant: bool
    transitivity_cells: CellSet
    exit_witness: tuple[int, int, int] | None = None  # (cell, node, image cell)

    @property
    def closure(self) -> CellSet:
        # W is all grid cells and cells are closed up to a null boundary, so cl D = D at grid level
        return self.cells

    @property
    def transitive(self) -> bool:
        return len(self.transitivity_cells) > 0


def scc_candidates(g: SymbolicImage, grid: CellGrid) -> list[ControlSetResult]:
    """Every strongly connected component carrying at least one edge, in cell order."""
    ncomp, label = connected_components(g.adjacency, directed=True, connection="strong")
    members: dict[int, list[int]] = {}
    for c, lab in enumerate(label):
        members.setdefault(int(lab), []).append(c)
    out = []
    for cells in sorted(members.values()):
        comp = set(cells)
        if not any(j in comp for c in cells for j in g.successors[c]):
            continue
        witness = None
        for c in cells:
            for j in g.successors[c]:
                if j not in comp:
                    witness = (c, min(g.labels[(c, j)]), j)
                    break
            if witness:
                break
        # c' in C(c) for c in the component iff c' reaches the component (or lies in it)
        reach = set(controllable_w(g, cells)) | comp
        trans = [c for c in cells if all(nb in reach for nb in grid.neighbors(c))]
        out.append(ControlSetResult(cellset(cells), witness is None, cellset(trans), witness))
    return out


def find_w_control_sets(g: SymbolicImage, grid: CellGrid, require_transitivity: bool = True) -> list[ControlSetResult]:
    """W-control sets: SCCs with an edge; by default only those with a nonvoid transitivity set.

    Components with an empty transitivity set are single cells created by slow drift across a
    cell (the discrete analogue of a point that every control moves the same way); they are
    available through ``scc_candidates`` and ``spurious_components``.
    """
    cands = scc_candidates(g, grid)
    if not require_transitivity:
        return cands
    return [c for c in cands if c.transitive]


def spurious_components(g: SymbolicImage, grid: CellGrid) -> list[ControlSetResult]:
    return [c for c in scc_candidates(g, grid) if not c.transitive]


def accessibility_report(g: SymbolicImage) -> dict:
    """Empirical accessibility check: every cell has an incoming and an outgoing edge."""
    no_out = [c for c in range(g.n) if not g.successors[c]]
    no_in = [c for c in range(g.n) if not g.predecessors[c]]
    return {"holds": not no_out and not no_in, "no_out": no_out, "no_in": no_in}


@dataclass(frozen=True)
class InvarianceReport:
    holds: bool
    violations: tuple[tuple[int, int, int], ...]


def invariant_in_q(dz: Discretization, K: Iterable[int]) -> InvarianceReport:
    """K is invariant in Q iff every sample image of a K-cell lies in K or outside Q."""
    K = cellset(K)
    inK = np.zeros(dz.grid.n, dtype=bool)
    inK[list(K)] = True
    viol = []
    for c in K:
        for k in range(dz.quad.m):
            for j in sorted(set(dz.images[k, c].tolist())):
                if j != OUTSIDE and not inK[j]:
                    viol.append((c, k, j))
    return InvarianceReport(not viol, tuple(viol))


def exits_through_boundary(dz: Discretization, K: Iterable[int]) -> list[tuple[int, int, int]]:
    """Sample images of K landing in a boundary cell of Q outside K (grid form of f(K) meeting dQ \\ K)."""
    K = set(cellset(K))
    if dz.grid.finite or dz.grid.full_circle:
        return []
    boundary = {0, dz.grid.n - 1} - K
    out = []
    for c in sorted(K):
        for k in range(dz.quad.m):
            for j in sorted(set(dz.images[k, c].tolist())):
                if j in boundary:
                    out.append((c, k, j))
    return out


@dataclass(frozen=True)
class SteeringCover:
    elements: tuple[tuple[CellSet, tuple[int, ...], int], ...]  # (cells, word, time)
    unreachable: CellSet

    @property
    def total(self) -> bool:
        return not self.unreachable

    @property
    def max_time(self) -> int:
        return max((t for _, _, t in self.elements), default=0)

    def word_of(self, cell: int) -> tuple[int, ...] | None:
        for cells, word, _ in self.elements:
            if cell in cells:
                return word
        return None


def steering_cover(dz: Discretization, K: Iterable[int], max_len: int = 64, beam: int = 512) -> SteeringCover:
    """Shortest node word per Q-cell steering all of its samples into K while staying in Q.

    Breadth-first over words, run jointly for all start cells. Sample trajectories are followed
    exactly; two partial words from the same start cell whose samples occupy the same cells are
    merged, keeping the lexicographically first. Cells of K also need a word of length >= 1.
    """
    K = cellset(K)
    if not K:
        raise ValueError("steering target K is empty")
    grid, quad, spec = dz.grid, dz.quad, dz.spec
    inK = np.zeros(grid.n + 1, dtype=bool)
    inK[list(K)] = True
    s = grid.samples.shape[1]
    start = np.arange(grid.n)
    pos = grid.samples.copy()
    words = np.zeros((grid.n, 0), dtype=np.int64)
    found: dict[int, tuple[tuple[int, ...], int]] = {}
    for t in range(1, max_len + 1):
        if pos.shape[0] == 0:
            break
        imgs = np.stack([spec.apply(pos.ravel(), w).reshape(pos.shape) for w in quad.nodes], axis=1)
        cells = grid.cell_of(imgs)  # (k, m, s)
        alive = (cells != OUTSIDE).all(axis=2)
        hit = alive & inK[cells].all(axis=2)
        k_idx, node = np.nonzero(hit)
        for i, w in zip(k_idx, node):  # row-major order is lexicographic in (state, node)
            c = int(start[i])
            if c not in found:
                found[c] = (tuple(int(v) for v in words[i]) + (int(w),), t)
        k_idx, node = np.nonzero(alive)
        keep = ~np.isin(start[k_idx], list(found))
        k_idx, node = k_idx[keep], node[keep]
        start = start[k_idx]
        pos = imgs[k_idx, node]
        words = np.concatenate([words[k_idx], node[:, None]], axis=1)
        key = np.concatenate([start[:, None], cells[k_idx, node]], axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        first.sort()
        if beam:
            counts: dict[int, int] = {}
            sel = []
            for i in first:
                c = int(start[i])
                if counts.get(c, 0) < beam:
                    counts[c] = counts.get(c, 0) + 1
                    sel.append(i)
            first = np.array(sel, dtype=np.int64)
        start, pos, words = start[first], pos[first], words[first]
    groups: dict[tuple[tuple[int, ...], int], list[int]] = {}
    for c in range(grid.n):
        if c in found:
            groups.setdefault(found[c], []).append(c)
    elements = tuple(sorted(((cellset(cs), w, t) for (w, t), cs in groups.items()), key=lambda e: e[0]))
    unreachable = cellset(c for c in range(grid.n) if c not in found)
    return SteeringCover(elements, unreachable)
