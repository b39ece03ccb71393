"""Command-line front end: JSON run configs, scenario orchestration, CSV/JSON output.

Exit codes: 0 on success (skipped checks included), k in 1..63 for k failed checks or claims,
64 for configuration errors, 65 when a solver produces no result.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .controlsets import accessibility_report, find_w_control_sets, spurious_components
from .discretization import BudgetError, build_grid, control_quadrature, discretize, finite_grid
from .entropy import (FamilySettings, adm1_counts, coder_controller_from_partition, entropy_via_coder,
                      simulate_loop)
from .partitions import LEX, MAX_MARGIN
from .qsm import QSMError, check_qsm, lower_fixed_point, power_qsm
from .systems import BUILTIN_FINITE, CIRCLE_FAMILIES, circle, load_table
from .verify import CHECKS, run_suite, support_outside

log = logging.getLogger("qsmlab")

CONFIG_ERROR = 64
SOLVER_ERROR = 65
MAX_FAILURE_CODE = 63


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


# ---------------------------------------------------------------- configuration


@dataclass
class SystemConfig:
    family: str = "circle1"  # circle1 | circle2 | fin3 | fin3_stationary | fin3_blocked | two_basin | identity | table
    sigma: float = 0.1
    amp: float = 0.05
    alpha: float = 0.09
    shift: float = 0.0
    controls: list = field(default_factory=lambda: [-1.0, 1.0])
    table_path: str | None = None


@dataclass
class GridConfig:
    cells: int = 512
    samples_per_cell: int = 4


@dataclass
class QSMConfig:
    tol: float = 1e-12
    max_iter: int = 100_000
    init: Any = "uniform"  # "uniform" or a list of cell weights


@dataclass
class PartitionConfig:
    tau_list: list = field(default_factory=lambda: [1, 2, 3])
    coarseness_list: list = field(default_factory=lambda: [1, 8, 64, 512])
    feedback_rule: str = LEX
    support_tol: float = 0.0


@dataclass
class EntropyConfig:
    n_max: int = 8
    node_budget: int = 200_000
    word_budget: int = 4096
    log_base: str = "e"


@dataclass
class VerifyConfig:
    tolerance: float = 0.05
    checks: list = field(default_factory=lambda: list(CHECKS))
    support_threshold: float = 1e-12
    conjugacy_shift: float = 0.0
    conjugacy_coarseness: int = 64
    components: list | None = None


@dataclass
class SimulateConfig:
    steps: int = 50
    trials: int = 10_000


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    q: list = field(default_factory=lambda: [0.2, 0.5])
    w: list | None = None  # defaults to Q
    grid: GridConfig = field(default_factory=GridConfig)
    quadrature_m: int = 8
    qsm: QSMConfig = field(default_factory=QSMConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    out: str = "out"
    seed: int = 0

    @property
    def is_circle(self) -> bool:
        return self.system.family in CIRCLE_FAMILIES

    def settings(self) -> FamilySettings:
        return FamilySettings(tuple(self.partition.tau_list), tuple(self.partition.coarseness_list),
                              self.entropy.n_max, self.entropy.node_budget, self.entropy.word_budget,
                              self.partition.feedback_rule, self.partition.support_tol)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _from_dict(cls, doc: dict, path: str = ""):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path or 'config'}")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        sub = f.default_factory() if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _from_dict(type(sub), value, f"{path}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    """Set dotted keys, e.g. ``system.alpha=0.08`` or ``partition.tau_list=[1,2]``; values parse as JSON."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(text)
    return doc


def _positive(value, name: str, integer: bool = False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
    if integer:
        ok = ok and float(value).is_integer()
    if not ok:
        raise ConfigError(f"{name} must be a positive {'integer' if integer else 'number'}, got {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    s = cfg.system
    if s.family not in CIRCLE_FAMILIES and s.family not in BUILTIN_FINITE and s.family != "table":
        raise ConfigError(f"unknown system family {s.family!r}")
    if s.family == "table":
        if not s.table_path or not Path(s.table_path).is_file():
            raise ConfigError(f"table_path {s.table_path!r} does not exist")
    if cfg.is_circle:
        for name in ("sigma", "amp"):
            _positive(getattr(s, name), f"system.{name}")
        if not (isinstance(cfg.q, list) and len(cfg.q) == 2 and cfg.q[0] < cfg.q[1]):
            raise ConfigError(f"q must be [lo, hi] with lo < hi, got {cfg.q!r}")
        if cfg.q[1] - cfg.q[0] > 1.0:
            raise ConfigError("q is longer than the circle")
        if not (isinstance(s.controls, list) and len(s.controls) == 2 and s.controls[0] < s.controls[1]):
            raise ConfigError(f"system.controls must be [lo, hi] with lo < hi, got {s.controls!r}")
    # finite systems ignore the grid, but a malformed value is still rejected
    _positive(cfg.grid.cells, "grid.cells", True)
    _positive(cfg.grid.samples_per_cell, "grid.samples_per_cell", True)
    _positive(cfg.quadrature_m, "quadrature_m", True)
    if cfg.w is not None and list(cfg.w) != list(cfg.q):
        raise ConfigError("w must equal q: control sets are computed on the grid of Q")
    _positive(cfg.qsm.tol, "qsm.tol")
    _positive(cfg.qsm.max_iter, "qsm.max_iter", True)
    if cfg.qsm.init != "uniform" and not isinstance(cfg.qsm.init, list):
        raise ConfigError("qsm.init must be \"uniform\" or a list of weights")
    for name in ("tau_list", "coarseness_list"):
        vals = getattr(cfg.partition, name)
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"partition.{name} must be a nonempty list")
        for v in vals:
            _positive(v, f"partition.{name} entries", True)
    if cfg.partition.feedback_rule not in (LEX, MAX_MARGIN):
        raise ConfigError(f"partition.feedback_rule must be {LEX!r} or {MAX_MARGIN!r}")
    for name in ("n_max", "node_budget", "word_budget"):
        _positive(getattr(cfg.entropy, name), f"entropy.{name}", True)
    if cfg.entropy.log_base not in io.LOG_BASES:
        raise ConfigError(f"entropy.log_base must be one of {sorted(io.LOG_BASES)}")
    _positive(cfg.verify.tolerance, "verify.tolerance")
    bad = set(cfg.verify.checks) - set(CHECKS)
    if bad:
        raise ConfigError(f"unknown checks {sorted(bad)}; known: {list(CHECKS)}")
    _positive(cfg.simulate.steps, "simulate.steps", True)
    _positive(cfg.simulate.trials, "simulate.trials", True)
    return cfg


def load_config(path: str | None, overrides: Sequence[str] = (), base: dict | None = None) -> RunConfig:
    doc = dict(base or {})
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            loaded = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        doc = _merge(doc, loaded)
    doc = apply_overrides(doc, overrides)
    try:
        cfg = _from_dict(RunConfig, doc)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    return validate(cfg)


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


# ---------------------------------------------------------------- building blocks


def build_system(cfg: RunConfig):
    s = cfg.system
    if cfg.is_circle:
        return circle(s.family, s.sigma, s.amp, s.alpha, s.controls[0], s.controls[1], s.shift)
    if s.family == "table":
        return load_table(s.table_path)
    return BUILTIN_FINITE[s.family]()


def build_discretization(cfg: RunConfig):
    spec = build_system(cfg)
    if spec.is_circle:
        grid = build_grid(cfg.q[0], cfg.q[1], cfg.grid.cells, cfg.grid.samples_per_cell, circle=True)
        quad = control_quadrature(spec.noise, cfg.quadrature_m)
    else:
        grid = finite_grid(spec)
        quad = control_quadrature(spec.noise)
    return discretize(spec, grid, quad)


def solve_qsm(cfg: RunConfig, dz):
    init = None if cfg.qsm.init == "uniform" else np.asarray(cfg.qsm.init, dtype=float)
    if init is not None and init.shape != (dz.grid.n,):
        raise ConfigError(f"qsm.init has {init.size} weights for {dz.grid.n} cells")
    return power_qsm(dz.ulam, cfg.qsm.tol, cfg.qsm.max_iter, init)


def _support_block(grid, eta) -> dict:
    sup = np.flatnonzero(eta > 0)
    if sup.size == 0:
        return {"count": 0}
    return {"count": int(sup.size), "first_cell": int(sup[0]), "last_cell": int(sup[-1]),
            "lo": grid.bounds(int(sup[0]))[0], "hi": grid.bounds(int(sup[-1]))[1],
            "min_positive": float(eta[sup].min())}


# ---------------------------------------------------------------- commands


def cmd_qsm(cfg: RunConfig, out: Path) -> int:
    dz = build_discretization(cfg)
    qsm = solve_qsm(cfg, dz)
    res = check_qsm(dz.ulam, qsm)
    io.write_qsm_csv(out / "qsm.csv", dz.grid, qsm.eta)
    io.write_json(out / "summary.json", {
        "command": "qsm", "rho": qsm.rho, "residual": qsm.residual, "iterations": qsm.iterations,
        "k_step_residuals": list(res.k_step), "rho_from_rowsums": res.rho_from_rowsums,
        "support": _support_block(dz.grid, qsm.eta)})
    print(f"rho = {qsm.rho:.12g}  residual = {qsm.residual:.3e}  support cells = {int(np.sum(qsm.eta > 0))}")
    return 0


def cmd_control_sets(cfg: RunConfig, out: Path) -> int:
    dz = build_discretization(cfg)
    sets = find_w_control_sets(dz.graph, dz.grid)
    spurious = spurious_components(dz.graph, dz.grid)
    io.write_controlsets_csv(out / "controlsets.csv", dz.grid, sets)
    io.write_json(out / "summary.json", {
        "command": "control-sets", "count": len(sets), "invariant": [D.invariant for D in sets],
        "sizes": [len(D.cells) for D in sets], "spurious_singletons": [D.cells for D in spurious],
        "accessibility": accessibility_report(dz.graph)["holds"]})
    for i, D in enumerate(sets):
        print(f"set {i}: cells {D.cells[0]}..{D.cells[-1]} ({len(D.cells)}), invariant={D.invariant}")
    return 0


def entropy_summary(cfg: RunConfig, dz, qsm, bound) -> dict:
    base = cfg.entropy.log_base
    per_tau = {}
    for tau in sorted(bound.per_tau):
        best = bound.best(tau)
        best_inc = bound.best(tau, "incremental")
        tops = [a.topological.h_top for a in bound.per_tau[tau] if a.feasible and a.topological]
        if best is None:
            per_tau[str(tau)] = {"h_metric": math.inf, "h_incremental": math.inf, "h_topological": math.inf,
                                 "infeasible": True}
            continue
        entry = {"h_metric": io.convert(best.h, base), "h_incremental": io.convert(best_inc.h_inc, base),
                 "h_topological": io.convert(min(tops), base) if tops else None,
                 "best_partition": best.label, "best_incremental_partition": best_inc.label,
                 "metric_report": io.report_summary(best.metric, base),
                 "incremental_report": io.report_summary(best_inc.incremental, base),
                 "ratio_incremental_over_metric": (best_inc.h_inc / best.h) if best.h > 0 else None,
                 "truncated": best.metric.truncated, "infeasible": False}
        adm1 = adm1_counts(best.partition, dz, qsm.eta, cfg.entropy.n_max, cfg.entropy.node_budget)
        nodes = [len(m) for m in best.tree.mass]
        entry["admissibility"] = {"mass_positive_words": nodes, "fixed_feedback_words": adm1,
                                  "diverge": nodes != adm1[:len(nodes)]}
        per_tau[str(tau)] = entry
    final_tau = max(bound.per_tau)
    return {"label": bound.label, "log_base": base, "rho": qsm.rho, "per_tau": per_tau,
            "final_tau": final_tau, "final_value": io.convert(bound.value(final_tau), base)}


def cmd_entropy(cfg: RunConfig, out: Path) -> int:
    dz = build_discretization(cfg)
    qsm = solve_qsm(cfg, dz)
    bound = cfg.settings().upper_bound(dz, qsm.eta, qsm.rho)
    trees = [b.tree for b in (bound.best(t) for t in sorted(bound.per_tau)) if b is not None]
    io.write_words_csv(out / "words.csv", trees)
    io.write_entropy_csv(out / "entropy.csv", bound.all(), cfg.entropy.log_base)
    summary = entropy_summary(cfg, dz, qsm, bound)
    io.write_json(out / "summary.json", {"command": "entropy", **summary})
    unit = "nats" if cfg.entropy.log_base == "e" else "bits"
    for tau, e in summary["per_tau"].items():
        print(f"tau={tau}: upper bound h_metric = {e['h_metric']}  h_incremental = {e['h_incremental']} ({unit})")
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    dz = build_discretization(cfg)
    v = cfg.verify
    summary = run_suite(dz, cfg.settings(), v.checks, v.tolerance, v.conjugacy_shift, v.conjugacy_coarseness,
                        v.support_threshold, v.components)
    io.write_json(out / "reports.json", {"reports": [r.to_json() for r in summary.reports],
                                         "counts": summary.counts})
    print(summary.table())
    return summary.failures


EXAMPLES = {
    "ex1": {"system": {"family": "circle1", "alpha": 0.09}, "q": [0.2, 0.5]},
    "ex2": {"system": {"family": "circle2", "alpha": 0.09}, "q": [0.1, 0.7]},
}


def cmd_example(which: str, cfg: RunConfig, out: Path) -> int:
    """Whole pipeline for one of the two circle examples, with a narrative summary."""
    t0 = time.time()
    dz = build_discretization(cfg)
    qsm = solve_qsm(cfg, dz)
    grid, spec = dz.grid, dz.spec
    io.write_qsm_csv(out / "qsm.csv", grid, qsm.eta)
    sets = find_w_control_sets(dz.graph, grid)
    io.write_controlsets_csv(out / "controlsets.csv", grid, sets)
    s = cfg.settings()
    bound = s.upper_bound(dz, qsm.eta, qsm.rho)
    trees = [b.tree for b in (bound.best(t) for t in sorted(bound.per_tau)) if b is not None]
    io.write_words_csv(out / "words.csv", trees)
    io.write_entropy_csv(out / "entropy.csv", bound.all(), cfg.entropy.log_base)
    v = cfg.verify
    suite = run_suite(dz, s, v.checks, v.tolerance, v.conjugacy_shift, v.conjugacy_coarseness,
                      v.support_threshold, v.components)
    io.write_json(out / "reports.json", {"reports": [r.to_json() for r in suite.reports], "counts": suite.counts})

    claims: dict[str, Any] = {}
    lines = [f"{which}: {spec.family}, sigma={spec.sigma}, A={spec.amp}, alpha={spec.alpha}, "
             f"Q=[{cfg.q[0]}, {cfg.q[1]}], {grid.n} cells, m={dz.quad.m}",
             f"rho = {qsm.rho:.10f} (residual {qsm.residual:.2e})"]
    regime_ok = spec.alpha > spec.alpha0
    claims["regime"] = {"alpha": spec.alpha, "alpha0": spec.alpha0, "above_tangency": regime_ok}
    if not regime_ok:
        lines.append(f"regime mismatch: alpha = {spec.alpha} <= alpha0 = {spec.alpha0:.4g}; "
                     "the invariant control set need not be the one described for alpha > alpha0")
    inv = [D for D in sets if D.invariant]
    lines.append(f"{len(sets)} W-control set(s), invariant flags {[D.invariant for D in sets]}")
    failed = 0
    if which == "ex1":
        try:
            d = lower_fixed_point(spec, cfg.q[0], cfg.q[1])
        except ValueError:
            d = None
        outside = support_outside(grid, qsm.eta, d, cfg.q[1], v.support_threshold) if d is not None else None
        ok = d is not None and len(outside) <= 1
        claims["support_in_d_half"] = {"d": d, "cells_outside": outside, "holds": ok}
        claims["one_invariant_set"] = {"count": len(inv), "holds": len(inv) == 1}
        lines.append(f"d(alpha) = {d}; supp eta inside [d, {cfg.q[1]}] up to one cell: {ok}")
        failed += (not ok) + (len(inv) != 1)
    else:
        flags = [D.invariant for D in sets]
        ok = len(sets) == 2 and flags == [False, True]
        claims["two_sets_left_leaks"] = {"flags": flags, "holds": ok,
                                         "witness": sets[0].exit_witness if sets else None}
        lines.append(f"two control sets, left not invariant, right invariant: {ok}")
        failed += not ok
    best = bound.best(max(bound.per_tau))
    if best is not None:
        cc = coder_controller_from_partition(best.partition, grid.n)
        coder = entropy_via_coder(cc, best.tree, qsm.rho, best.partition.tau)
        loop = simulate_loop(cc, dz, qsm.eta, cfg.simulate.steps, cfg.simulate.trials, cfg.seed)
        claims["coder"] = {"identical_to_metric": coder.H == best.metric.H, "exit_fraction": loop.exit_fraction}
        lines.append(f"coder-controller: entropy identical to metric path = {coder.H == best.metric.H}, "
                     f"closed-loop exit fraction {loop.exit_fraction:.4f} over {cfg.simulate.trials} runs")
    for r in suite.reports:
        lines.append(r.line())
    h = bound.value(max(bound.per_tau))
    lines.append(f"upper bound on h_mu(Q) at tau={max(bound.per_tau)}: "
                 f"{io.convert(h, cfg.entropy.log_base):.6g} ({'nats' if cfg.entropy.log_base == 'e' else 'bits'})")
    lines.append(f"elapsed {time.time() - t0:.1f} s")
    io.write_json(out / "summary.json", {"command": "example", "which": which, "claims": claims,
                                         **entropy_summary(cfg, dz, qsm, bound), "verify": suite.counts})
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return failed + suite.failures


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qsmlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["qsm", "control-sets", "entropy", "verify", "example"])
    p.add_argument("which", nargs="?", choices=sorted(EXAMPLES), help="example name (example command only)")
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config's out)")
    p.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                   help="dotted config key, value parsed as JSON (repeatable)")
    p.add_argument("--log-base", choices=["e", "2"], help="report entropies in nats (e) or bits (2)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def thread_cap() -> int | None:
    raw = os.environ.get("QSMLAB_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"QSMLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"QSMLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # usage errors are config errors; --help exits 0
        return CONFIG_ERROR if e.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.override)
        if args.log_base:
            overrides.append(f"entropy.log_base={json.dumps(args.log_base)}")
        base = None
        if args.command == "example":
            if args.which is None:
                raise ConfigError("example needs a name: ex1 or ex2")
            base = EXAMPLES[args.which]
        elif args.which is not None:
            raise ConfigError(f"unexpected argument {args.which!r}")
        cfg = load_config(args.config, overrides, base)
        out = Path(args.out or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "config.json", cfg.to_dict())
        threads = thread_cap()
        with threadpool_limits(limits=threads):
            if args.command == "qsm":
                code = cmd_qsm(cfg, out)
            elif args.command == "control-sets":
                code = cmd_control_sets(cfg, out)
            elif args.command == "entropy":
                code = cmd_entropy(cfg, out)
            elif args.command == "verify":
                code = cmd_verify(cfg, out)
            else:
                code = cmd_example(args.which, cfg, out)
    except (ConfigError, BudgetError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except QSMError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return SOLVER_ERROR
    return min(int(code), MAX_FAILURE_CODE)


if __name__ == "__main__":
    sys.exit(main())
