"""Cell grids over Q, control quadratures, the Ulam operator and the symbolic image."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .systems import SystemSpec

OUTSIDE = -1


class BudgetError(RuntimeError):
    """An enumeration would exceed its configured size budget."""


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Uniform half-open cells over [qlo, qhi), or one cell per state for finite systems.

    ``circle`` marks a grid on the circle, where cell lookup reduces offsets mod 1 so that a
    region like [0.8, 1.1] wraps correctly.
    """

    qlo: float
    qhi: float
    n: int
    samples_per_cell: int = 1
    circle: bool = False
    states: tuple[int, ...] | None = None
    state_count: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"cell count must be positive, got {self.n}")
        if self.samples_per_cell < 1:
            raise ValueError(f"samples per cell must be positive, got {self.samples_per_cell}")
        if self.states is None and not self.qlo < self.qhi:
            raise ValueError(f"need qlo < qhi, got [{self.qlo}, {self.qhi}]")

    @property
    def finite(self) -> bool:
        return self.states is not None

    @property
    def width(self) -> float:
        return 1.0 if self.finite else (self.qhi - self.qlo) / self.n

    @property
    def full_circle(self) -> bool:
        return self.circle and abs((self.qhi - self.qlo) - 1.0) < 1e-12

    @cached_property
    def edges(self) -> np.ndarray:
        if self.finite:
            return np.arange(self.n + 1, dtype=float)
        return self.qlo + self.width * np.arange(self.n + 1)

    def bounds(self, i: int) -> tuple[float, float]:
        if self.finite:
            s = float(self.states[i])
            return s, s
        return float(self.edges[i]), float(self.edges[i + 1])

    @cached_property
    def samples(self) -> np.ndarray:
        """Sample points, shape (n, s); centred layout lo + w*(2k+1)/(2s), so s=1 is the midpoint."""
        if self.finite:
            return np.array(self.states, dtype=np.int64).reshape(-1, 1)
        s = self.samples_per_cell
        frac = (2.0 * np.arange(s) + 1.0) / (2.0 * s)
        pts = self.qlo + self.width * (np.arange(self.n)[:, None] + frac[None, :])
        return np.mod(pts, 1.0) if self.circle else pts

    @cached_property
    def _state_lookup(self) -> np.ndarray:
        lut = np.full(self.state_count, OUTSIDE, dtype=np.int64)
        lut[list(self.states)] = np.arange(self.n)
        return lut

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        """Cell index of each state, OUTSIDE (-1) for states not in Q. NaN maps to OUTSIDE."""
        x = np.asarray(x)
        if self.finite:
            return self._state_lookup[x.astype(np.int64)]
        off = x - self.qlo
        if self.circle:
            off = np.mod(off, 1.0)
        with np.errstate(invalid="ignore"):
            idx = np.floor(off / self.width)
            ok = (off >= 0) & (idx < self.n) & np.isfinite(off)
        out = np.full(x.shape, OUTSIDE, dtype=np.int64)
        out[ok] = idx[ok].astype(np.int64)
        return out

    def boundary_distance(self, x: np.ndarray) -> np.ndarray:
        """Distance of states to the boundary of Q (inf on the full circle, 0/1 for finite sets)."""
        if self.finite:
            return (self.cell_of(x) != OUTSIDE).astype(float)
        if self.full_circle:
            return np.full(np.shape(x), np.inf)
        off = np.asarray(x) - self.qlo
        if self.circle:
            off = np.mod(off, 1.0)
        return np.minimum(off, (self.qhi - self.qlo) - off)

    def neighbors(self, i: int) -> list[int]:
        """Grid-adjacent cells (radius 1); finite systems carry no geometry and have none."""
        if self.finite:
            return []
        out = []
        for j in (i - 1, i + 1):
            if 0 <= j < self.n:
                out.append(j)
            elif self.full_circle:
                out.append(j % self.n)
        return sorted(set(out) - {i})


def build_grid(qlo: float, qhi: float, n: int, samples_per_cell: int = 1, circle: bool = False) -> CellGrid:
    return CellGrid(float(qlo), float(qhi), int(n), int(samples_per_cell), circle)


def finite_grid(spec: SystemSpec, q_states: Sequence[int] | None = None) -> CellGrid:
    states = tuple(sorted(q_states if q_states is not None else (spec.q_states or range(spec.state_count))))
    return CellGrid(0.0, float(spec.state_count), len(states), 1, False, states, spec.state_count)


def grid_for(spec: SystemSpec, qlo: float | None = None, qhi: float | None = None, n: int = 0,
             samples_per_cell: int = 1) -> CellGrid:
    if spec.is_circle:
        return build_grid(qlo, qhi, n, samples_per_cell, circle=True)
    return finite_grid(spec)


@dataclass(frozen=True, eq=False)
class ControlQuadrature:
    nodes: tuple
    weights: np.ndarray

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("node and weight counts differ")
        if np.any(self.weights <= 0) or abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("quadrature weights must be positive and sum to 1")

    @property
    def m(self) -> int:
        return len(self.nodes)

    def word_values(self, word: Iterable[int]) -> tuple:
        return tuple(self.nodes[k] for k in word)


def control_quadrature(noise, m: int | None = None) -> ControlQuadrature:
    """Midpoint rule on a uniform interval; finite sets reproduced with their uniform weights."""
    ctrl = noise.controls
    if ctrl.kind == "finite":
        k = len(ctrl.values)
        return ControlQuadrature(tuple(ctrl.values), np.full(k, 1.0 / k))
    if m is None or m < 1:
        raise ValueError(f"quadrature size must be positive, got {m}")
    nodes = tuple(float(ctrl.lo + (k + 0.5) * (ctrl.hi - ctrl.lo) / m) for k in range(m))
    return ControlQuadrature(nodes, np.full(m, 1.0 / m))


def image_cells(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature) -> np.ndarray:
    """Cell index of every sample image, shape (m, n, s); OUTSIDE where the image leaves Q."""
    pts = grid.samples.ravel()
    out = np.empty((quad.m, grid.n, grid.samples.shape[1]), dtype=np.int64)
    for k, omega in enumerate(quad.nodes):
        out[k] = grid.cell_of(spec.apply(pts, omega)).reshape(grid.n, -1)
    return out


@dataclass(frozen=True, eq=False)
class UlamOperator:
    """Row-sub-stochastic cell transition weights, P = sum_k weight_k * U_k."""

    matrix: sp.csr_matrix
    node_matrices: tuple[sp.csr_matrix, ...]
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triples(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[i]), int(coo.col[i]), float(coo.data[i])) for i in order]

    def restricted(self, cells: Sequence[int]) -> "UlamOperator":
        """Drop all mass landing outside ``cells`` (the operator of a subregion of Q)."""
        mask = np.zeros(self.n, dtype=float)
        mask[list(cells)] = 1.0
        d = sp.diags(mask).tocsr()
        mats = tuple((d @ u @ d).tocsr() for u in self.node_matrices)
        total = sum(w * u for w, u in zip(self.weights, mats)).tocsr()
        return UlamOperator(total, mats, self.weights)


def _node_matrix(cells: np.ndarray, n: int) -> sp.csr_matrix:
    s = cells.shape[1]
    rows = np.repeat(np.arange(n), s)
    cols = cells.ravel()
    keep = cols != OUTSIDE
    u = sp.coo_matrix((np.full(keep.sum(), 1.0 / s), (rows[keep], cols[keep])), shape=(n, n))
    return u.tocsr()


def assemble_ulam(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature,
                  images: np.ndarray | None = None) -> UlamOperator:
    images = image_cells(spec, grid, quad) if images is None else images
    mats = tuple(_node_matrix(images[k], grid.n) for k in range(quad.m))
    total = mats[0] * quad.weights[0]
    for w, u in zip(quad.weights[1:], mats[1:]):
        total = total + w * u
    total = total.tocsr()
    total.sum_duplicates()
    total.sort_indices()
    return UlamOperator(total, mats, np.asarray(quad.weights))


@dataclass(frozen=True, eq=False)
class SymbolicImage:
    """Directed graph on W-cells; edge (i, j) carries the quadrature nodes moving some sample of i into j."""

    n: int
    labels: dict[tuple[int, int], frozenset[int]]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        if not self.labels:
            return sp.csr_matrix((self.n, self.n))
        ij = np.array(sorted(self.labels), dtype=np.int64)
        a = sp.coo_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(self.n, self.n))
        return a.tocsr()

    @cached_property
    def successors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.labels):
            out[i].append(j)
        return out

    @cached_property
    def predecessors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.labels):
            out[j].append(i)
        return out

    def edges(self) -> list[tuple[int, int, tuple[int, ...]]]:
        return [(i, j, tuple(sorted(self.labels[(i, j)]))) for i, j in sorted(self.labels)]


def symbolic_image(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature,
                   images: np.ndarray | None = None) -> SymbolicImage:
    images = image_cells(spec, grid, quad) if images is None else images
    labels: dict[tuple[int, int], set[int]] = {}
    for k in range(quad.m):
        for i in range(grid.n):
            for j in np.unique(images[k, i]):
                if j != OUTSIDE:
                    labels.setdefault((i, int(j)), set()).add(k)
    return SymbolicImage(grid.n, {e: frozenset(v) for e, v in labels.items()})


@dataclass(frozen=True, eq=False)
class Discretization:
    """Everything derived from (spec, grid, quad), computed once and shared."""

    spec: SystemSpec
    grid: CellGrid
    quad: ControlQuadrature
    images: np.ndarray = field(repr=False)

    @cached_property
    def ulam(self) -> UlamOperator:
        return assemble_ulam(self.spec, self.grid, self.quad, self.images)

    @cached_property
    def graph(self) -> SymbolicImage:
        return symbolic_image(self.spec, self.grid, self.quad, self.images)


def discretize(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature) -> Discretization:
    return Discretization(spec, grid, quad, image_cells(spec, grid, quad))


def all_words(m: int, tau: int) -> np.ndarray:
    """All node words of length tau in lexicographic order, shape (m**tau, tau)."""
    return np.array(list(itertools.product(range(m), repeat=tau)), dtype=np.int64).reshape(-1, tau)


def word_survival(spec: SystemSpec, grid: CellGrid, quad: ControlQuadrature, tau: int,
                  region: Sequence[int] | None = None, budget: int = 4096,
                  with_margin: bool = False) -> tuple[np.ndarray, np.ndarray | None]:
    """For every cell c and word w of length tau: do all samples of c stay in the region for steps 1..tau?

    Enumerates words level by level; a prefix that loses a sample is cut (its positions become NaN
    and can never recover). Returns a bool array (n, m**tau) in lexicographic word order and, on
    request, the minimum boundary distance along each surviving trajectory set.
    """
    m = quad.m
    if m ** tau > budget:
        raise BudgetError(f"{m}^{tau} = {m ** tau} words exceed the budget {budget}; reduce m or tau")
    allowed = np.zeros(grid.n + 1, dtype=bool)  # last slot absorbs OUTSIDE
    allowed[np.arange(grid.n) if region is None else np.asarray(list(region), dtype=np.int64)] = True
    pts = grid.samples.ravel()
    finite = grid.finite
    pos = pts[None, :].astype(float) if not finite else pts[None, :]
    alive = np.ones((1, pts.size), dtype=bool)
    margin = np.full((1, pts.size), np.inf) if with_margin else None
    for _ in range(tau):
        new_pos, new_alive, new_margin = [], [], []
        for omega in quad.nodes:
            if finite:
                img = spec.apply(pos, omega)
            else:
                img = np.where(alive, spec.apply(np.where(alive, pos, 0.0), omega), np.nan)
            cells = grid.cell_of(img)
            ok = alive & allowed[cells]
            new_pos.append(img)
            new_alive.append(ok)
            if with_margin:
                new_margin.append(np.where(ok, np.minimum(margin, grid.boundary_distance(img)), -np.inf))
        # word order: previous prefix is the slow index, the new symbol the fast one
        pos = np.stack(new_pos, axis=1).reshape(-1, pts.size)
        alive = np.stack(new_alive, axis=1).reshape(-1, pts.size)
        if with_margin:
            margin = np.stack(new_margin, axis=1).reshape(-1, pts.size)
    s = grid.samples.shape[1]
    keep = alive.reshape(-1, grid.n, s).all(axis=2).T
    marg = margin.reshape(-1, grid.n, s).min(axis=2).T if with_margin else None
    return keep, marg


def word_operator(dz: Discretization, word: Sequence[int], region: Sequence[int] | None = None) -> sp.csr_matrix:
    """U_w: product of the one-step single-node Ulam matrices, restricted to the region."""
    mats = dz.ulam.node_matrices
    if region is not None:
        mats = dz.ulam.restricted(region).node_matrices
    out = mats[word[0]]
    for k in word[1:]:
        out = out @ mats[k]
    return out.tocsr()
