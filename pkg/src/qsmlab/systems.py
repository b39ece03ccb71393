"""Controlled maps x_{k+1} = f(x_k, u_k): circle-map families and finite tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

CIRCLE_FAMILIES = {"circle1": 1, "circle2": 2}
FINITE_FAMILIES = ("finite", "table")


class DomainError(ValueError):
    """A state or control value lies outside the model's domain."""


@dataclass(frozen=True)
class ControlRange:
    kind: str = "interval"  # "interval" or "finite"
    lo: float = -1.0
    hi: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind == "interval":
            if not self.lo < self.hi:
                raise ValueError(f"control interval needs lo < hi, got [{self.lo}, {self.hi}]")
        elif self.kind == "finite":
            if len(self.values) == 0:
                raise ValueError("finite control set is empty")
            if len(set(self.values)) != len(self.values):
                raise ValueError(f"duplicate control values in {self.values}")
        else:
            raise ValueError(f"unknown control range kind {self.kind!r}")

    def contains(self, omega) -> bool:
        if self.kind == "finite":
            return omega in self.values
        return self.lo <= omega <= self.hi


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform probability on the control range (the only noise law used here)."""

    kind: str  # "uniform_interval" or "uniform_finite"
    controls: ControlRange

    def __post_init__(self):
        expected = "uniform_interval" if self.controls.kind == "interval" else "uniform_finite"
        if self.kind != expected:
            raise ValueError(f"noise kind {self.kind!r} does not match control range {self.controls.kind!r}")


@dataclass(frozen=True)
class SystemSpec:
    """A controlled map together with its control range.

    Circle families: f(x, w) = x + sigma*cos(2*pi*k*x) + amp*w + alpha (mod 1), with k = 1
    for ``circle1`` and k = 2 for ``circle2``. A nonzero ``shift`` c conjugates the map by the
    rotation x -> x + c, i.e. the map becomes y -> f(y - c) + c (mod 1).

    Finite families: ``table[state][control_index]`` is the image state. ``q_states`` is the
    default region Q for finite fixtures.
    """

    family: str
    sigma: float = 0.1
    amp: float = 0.05
    alpha: float = 0.07
    shift: float = 0.0
    controls: ControlRange = field(default_factory=ControlRange)
    table: tuple[tuple[int, ...], ...] | None = None
    q_states: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self):
        if self.family in CIRCLE_FAMILIES:
            if self.controls.kind != "interval":
                raise ValueError("circle families take an interval control range")
        elif self.family in FINITE_FAMILIES:
            if self.table is None:
                raise ValueError("finite families need a transition table")
            if self.controls.kind != "finite":
                raise ValueError("finite families take a finite control range")
            n_ctrl = len(self.controls.values)
            n_states = len(self.table)
            for s, row in enumerate(self.table):
                if len(row) != n_ctrl:
                    raise ValueError(f"table row {s} has {len(row)} entries, expected {n_ctrl}")
                for t in row:
                    if not 0 <= t < n_states:
                        raise ValueError(f"table entry {t} in row {s} is not a state")
        else:
            raise ValueError(f"unknown system family {self.family!r}")

    @property
    def is_circle(self) -> bool:
        return self.family in CIRCLE_FAMILIES

    @property
    def state_count(self) -> int:
        if self.table is None:
            raise AttributeError("circle families have a continuous state space")
        return len(self.table)

    @property
    def noise(self) -> NoiseSpec:
        kind = "uniform_interval" if self.controls.kind == "interval" else "uniform_finite"
        return NoiseSpec(kind, self.controls)

    @property
    def alpha0(self) -> float:
        """Tangency threshold sigma - amp of the upper curve."""
        return self.sigma - self.amp

    def control_index(self, omega) -> int:
        try:
            return self.controls.values.index(omega)
        except ValueError:
            raise DomainError(f"control {omega!r} not in {self.controls.values}") from None

    def apply(self, xs: np.ndarray, omega) -> np.ndarray:
        """Vectorized f(x, omega) for an array of states and a single control value."""
        if self.is_circle:
            if not self.controls.contains(omega):
                raise DomainError(f"control {omega} outside [{self.controls.lo}, {self.controls.hi}]")
            x = np.asarray(xs, dtype=float)
            if self.shift:
                x = _mod1(x - self.shift)
                return _mod1(self._circle(x, omega) + self.shift)
            return self._circle(x, omega)
        idx = self.control_index(omega)
        col = np.array([row[idx] for row in self.table], dtype=np.int64)
        return col[np.asarray(xs, dtype=np.int64)]

    def _circle(self, x: np.ndarray, omega: float) -> np.ndarray:
        k = CIRCLE_FAMILIES[self.family]
        return _mod1(x + self.sigma * np.cos(2.0 * np.pi * k * x) + self.amp * omega + self.alpha)


def _mod1(v):
    r = np.mod(v, 1.0)
    # np.mod can round tiny negatives up to exactly 1.0
    return np.where(r >= 1.0, 0.0, r)


def eval_map(spec: SystemSpec, x, omega):
    """Exact f(x, omega); circle results lie in [0, 1)."""
    if spec.is_circle:
        return float(spec.apply(np.array([x], dtype=float), omega)[0])
    if not 0 <= int(x) < spec.state_count:
        raise DomainError(f"state {x} outside 0..{spec.state_count - 1}")
    return int(spec.apply(np.array([x]), omega)[0])


def trajectory(spec: SystemSpec, x0, word: Sequence) -> list:
    """phi(0..k, x0, u) with phi(0) = x0 and phi(j+1) = f(phi(j), u_j)."""
    out = [x0]
    x = x0
    for omega in word:
        x = eval_map(spec, x, omega)
        out.append(x)
    return out


def circle(family: str = "circle1", sigma: float = 0.1, amp: float = 0.05, alpha: float = 0.07,
           lo: float = -1.0, hi: float = 1.0, shift: float = 0.0) -> SystemSpec:
    return SystemSpec(family, sigma=sigma, amp=amp, alpha=alpha, shift=shift,
                      controls=ControlRange("interval", lo, hi), name=family)


def finite_system(table: Sequence[Sequence[int]], controls: Sequence, q_states: Sequence[int] | None = None,
                  family: str = "finite", name: str = "") -> SystemSpec:
    return SystemSpec(family, controls=ControlRange("finite", values=tuple(controls)),
                      table=tuple(tuple(int(t) for t in row) for row in table),
                      q_states=None if q_states is None else tuple(int(q) for q in q_states),
                      name=name)


def make_fin3() -> SystemSpec:
    """Three states, Q = {0, 1}, state 2 absorbing outside Q."""
    return finite_system([[0, 1], [0, 2], [2, 2]], ("a", "b"), q_states=(0, 1), name="fin3")


def make_fin3_stationary() -> SystemSpec:
    """FIN3 with f(1, b) := 1, so Q is never left and rho = 1."""
    return finite_system([[0, 1], [0, 1], [2, 2]], ("a", "b"), q_states=(0, 1), name="fin3_stationary")


def make_fin3_blocked() -> SystemSpec:
    """FIN3 with f(1, a) := 2: state 1 has no control keeping it in Q."""
    return finite_system([[0, 1], [2, 2], [2, 2]], ("a", "b"), q_states=(0, 1), name="fin3_blocked")


def make_two_basin() -> SystemSpec:
    """Two copies of the FIN3 block, {0, 1} and {2, 3}, sharing the absorbing state 4."""
    table = [[0, 1], [0, 4], [2, 3], [2, 4], [4, 4]]
    return finite_system(table, ("a", "b"), q_states=(0, 1, 2, 3), name="two_basin")


def make_identity(n: int = 4) -> SystemSpec:
    """f(x, u) = x on n states, all in Q: every state is its own invariant control set."""
    return finite_system([[s, s] for s in range(n)], ("a", "b"), name=f"identity{n}")


def relabel(spec: SystemSpec, perm: Sequence[int]) -> SystemSpec:
    """Conjugate a finite system by the state bijection s -> perm[s]."""
    perm = [int(v) for v in perm]
    if sorted(perm) != list(range(spec.state_count)):
        raise ValueError(f"{perm} is not a permutation of the {spec.state_count} states")
    inv = np.argsort(perm)
    table = [[perm[spec.table[inv[s]][k]] for k in range(len(spec.controls.values))]
             for s in range(spec.state_count)]
    q = None if spec.q_states is None else tuple(sorted(perm[s] for s in spec.q_states))
    return replace(spec, table=tuple(tuple(r) for r in table), q_states=q, name=spec.name + "_relabeled")


def load_table(path: str | Path) -> SystemSpec:
    """Read a finite table from JSON: {"controls": [...], "table": [[...], ...], "q_states": [...]}."""
    doc: dict[str, Any] = json.loads(Path(path).read_text())
    return finite_system(doc["table"], doc["controls"], doc.get("q_states"), family="table",
                         name=doc.get("name", Path(path).stem))


BUILTIN_FINITE = {
    "fin3": make_fin3,
    "fin3_stationary": make_fin3_stationary,
    "fin3_blocked": make_fin3_blocked,
    "two_basin": make_two_basin,
    "identity": make_identity,
}
