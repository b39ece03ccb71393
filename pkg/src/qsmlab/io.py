"""CSV and JSON emission for plotting tools, with readers that invert every writer.

Floats are written with ``repr`` so a round trip reproduces them bit for bit. Cell lists and
words are space-separated integers. Entropies are written in the requested log base.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .controlsets import ControlSetResult, cellset
from .discretization import CellGrid
from .entropy import EntropyReport, PartitionAnalysis, WordTree

QSM_COLUMNS = ("cell", "cell_lo", "cell_hi", "eta")
CONTROLSET_COLUMNS = ("set", "first_cell", "last_cell", "size", "lo", "hi", "invariant", "transitivity_cells",
                      "exit_cell", "exit_node", "exit_image", "cells", "transitivity")
WORD_COLUMNS = ("tau", "depth", "word", "mass", "scaled_mass")
ENTROPY_COLUMNS = ("label", "kind", "tau", "n", "H", "H_over_ntau", "truncated")

LOG_BASES = {"e": 1.0, "2": math.log(2.0)}


def convert(value: float, log_base: str = "e") -> float:
    """Natural-log entropy in the requested base."""
    return value / LOG_BASES[log_base]


def _f(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "infinity" if x > 0 else "-infinity"
    return repr(x)


_INF = {"infinity": math.inf, "-infinity": -math.inf}


def _pf(s: str) -> float:
    return _INF[s] if s in _INF else float(s)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split()) if s.strip() else ()


def _join(xs: Iterable[int]) -> str:
    return " ".join(str(int(v)) for v in xs)


def _write(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def _read(path: Path, columns: Sequence[str]) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != tuple(columns):
            raise ValueError(f"{path}: expected columns {columns}, got {r.fieldnames}")
        return list(r)


# ---------------------------------------------------------------- qsm.csv


def write_qsm_csv(path, grid: CellGrid, eta: np.ndarray) -> Path:
    rows = []
    for c in range(grid.n):
        lo, hi = grid.bounds(c)
        rows.append((c, _f(lo), _f(hi), _f(eta[c])))
    return _write(path, QSM_COLUMNS, rows)


def read_qsm_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(bounds (n, 2), eta)."""
    rows = _read(path, QSM_COLUMNS)
    bounds = np.array([[_pf(r["cell_lo"]), _pf(r["cell_hi"])] for r in rows])
    eta = np.array([_pf(r["eta"]) for r in rows])
    return bounds, eta


# ---------------------------------------------------------------- controlsets.csv


def write_controlsets_csv(path, grid: CellGrid, sets: Sequence[ControlSetResult]) -> Path:
    rows = []
    for i, D in enumerate(sets):
        w = D.exit_witness or ("", "", "")
        rows.append((i, D.cells[0], D.cells[-1], len(D.cells), _f(grid.bounds(D.cells[0])[0]),
                     _f(grid.bounds(D.cells[-1])[1]), int(D.invariant), len(D.transitivity_cells),
                     *w, _join(D.cells), _join(D.transitivity_cells)))
    return _write(path, CONTROLSET_COLUMNS, rows)


def read_controlsets_csv(path) -> list[ControlSetResult]:
    out = []
    for r in _read(path, CONTROLSET_COLUMNS):
        w = None if r["exit_cell"] == "" else (int(r["exit_cell"]), int(r["exit_node"]), int(r["exit_image"]))
        out.append(ControlSetResult(_ints(r["cells"]), bool(int(r["invariant"])), _ints(r["transitivity"]), w))
    return out


# ---------------------------------------------------------------- words.csv


def write_words_csv(path, trees: Sequence[WordTree]) -> Path:
    rows = []
    for tree in trees:
        for n in range(1, tree.depth + 1):
            scale = tree.scale(n)
            for word, mass in zip(tree.words(n), tree.mass[n - 1]):
                rows.append((tree.tau, n, _join(word), _f(mass), _f(float(mass) * scale)))
    return _write(path, WORD_COLUMNS, rows)


def read_words_csv(path) -> dict[int, dict[tuple[int, ...], float]]:
    """tau -> {word: mass}."""
    out: dict[int, dict[tuple[int, ...], float]] = {}
    for r in _read(path, WORD_COLUMNS):
        out.setdefault(int(r["tau"]), {})[_ints(r["word"])] = _pf(r["mass"])
    return out


# ---------------------------------------------------------------- entropy.csv


def entropy_rows(analyses: Iterable[PartitionAnalysis], log_base: str = "e") -> list[tuple]:
    rows = []
    for a in analyses:
        for rep in (a.metric, a.incremental):
            if rep is None:
                continue
            if rep.infeasible:
                rows.append((a.label, rep.kind, rep.tau, 0, "infinity", "infinity", 0))
                continue
            for n, (H, r) in enumerate(zip(rep.H, rep.rate), start=1):
                rows.append((a.label, rep.kind, rep.tau, n, _f(convert(H, log_base)), _f(convert(r, log_base)),
                             int(rep.truncated)))
    return rows


def write_entropy_csv(path, analyses: Iterable[PartitionAnalysis], log_base: str = "e") -> Path:
    return _write(path, ENTROPY_COLUMNS, entropy_rows(analyses, log_base))


def read_entropy_csv(path) -> dict[tuple[str, str], dict]:
    """(label, kind) -> {"tau", "H", "rate", "truncated", "infeasible"}."""
    out: dict[tuple[str, str], dict] = {}
    for r in _read(path, ENTROPY_COLUMNS):
        d = out.setdefault((r["label"], r["kind"]), {"tau": int(r["tau"]), "H": [], "rate": [],
                                                     "truncated": False, "infeasible": False})
        if r["H"] == "infinity":
            d["infeasible"] = True
            continue
        d["H"].append(_pf(r["H"]))
        d["rate"].append(_pf(r["H_over_ntau"]))
        d["truncated"] = bool(int(r["truncated"]))
    return out


def report_summary(rep: EntropyReport, log_base: str = "e") -> dict:
    return {"estimate": convert(rep.estimate, log_base), "window": list(rep.window),
            "window_min": convert(rep.window_min, log_base), "truncated": rep.truncated,
            "infeasible": rep.infeasible}


# ---------------------------------------------------------------- JSON


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _finite(x):
    if isinstance(x, dict):
        return {str(k): _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "infinity" if x > 0 else "-infinity" if x < 0 else "nan"
    return x


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_finite(doc), indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
