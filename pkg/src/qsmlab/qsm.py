"""Quasi-stationary measures of the Ulam operator: eta P = rho eta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .discretization import UlamOperator
from .systems import SystemSpec


class QSMError(RuntimeError):
    """No quasi-stationary measure could be produced."""

    def __init__(self, message: str, last: "QuasiStationaryMeasure | None" = None):
        super().__init__(message)
        self.last = last


@dataclass(frozen=True, eq=False)
class QuasiStationaryMeasure:
    eta: np.ndarray
    rho: float
    residual: float
    iterations: int
    method: str = "power"

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.eta > threshold)

    def restricted(self, cells, renormalize: bool = False) -> "QuasiStationaryMeasure":
        eta = np.zeros_like(self.eta)
        idx = np.asarray(list(cells), dtype=np.int64)
        eta[idx] = self.eta[idx]
        if renormalize:
            total = eta.sum()
            if total <= 0:
                raise QSMError("restriction carries no mass")
            eta = eta / total
        return QuasiStationaryMeasure(eta, self.rho, float("nan"), self.iterations, self.method + "+restricted")


def eigen_defect(P: UlamOperator, eta: np.ndarray, rho: float) -> float:
    return float(np.max(np.abs(rho * eta - P.matrix.T @ eta)))


def power_qsm(P: UlamOperator, tol: float = 1e-12, max_iter: int = 100_000,
              init: np.ndarray | None = None) -> QuasiStationaryMeasure:
    """Normalized left power iteration eta <- eta P / |eta P|_1."""
    n = P.n
    eta = np.full(n, 1.0 / n) if init is None else np.asarray(init, dtype=float) / np.sum(init)
    PT = P.matrix.T.tocsr()
    rho = 0.0
    for it in range(1, max_iter + 1):
        nxt = PT @ eta
        mass = float(nxt.sum())
        if mass <= 0.0:
            raise QSMError("no quasi-stationary measure reachable from init: all mass annihilated")
        nxt /= mass
        delta = float(np.abs(nxt - eta).sum())
        drho = abs(mass - rho)
        eta, rho = nxt, mass
        if delta < tol and drho < tol:
            return QuasiStationaryMeasure(eta, rho, eigen_defect(P, eta, rho), it)
    last = QuasiStationaryMeasure(eta, rho, eigen_defect(P, eta, rho), max_iter)
    raise QSMError(f"power iteration did not converge in {max_iter} iterations "
                   f"(last defect {last.residual:.3e})", last)


def dense_qsm(P: UlamOperator, oracle_bound: int = 512, cluster_tol: float = 1e-9,
              sign_tol: float = 1e-10) -> QuasiStationaryMeasure:
    """Dense oracle: all left eigenpairs; the largest real eigenvalue with a nonnegative eigenvector.

    A degenerate leading eigenspace is resolved by projecting the uniform vector onto it.
    """
    n = P.n
    if n > oracle_bound:
        raise QSMError(f"{n} cells exceed the dense oracle bound {oracle_bound}")
    A = P.dense()
    vals, vecs = scipy.linalg.eig(A.T)
    real = np.flatnonzero(np.abs(vals.imag) <= cluster_tol * max(1.0, np.abs(vals).max()))
    cands = sorted({round(float(vals[i].real), 9) for i in real if vals[i].real > cluster_tol}, reverse=True)
    for lam in cands:
        group = [i for i in real if abs(vals[i].real - lam) <= 1e-8]
        basis = np.real(vecs[:, group])
        rho = float(np.mean(vals[group].real))
        if len(group) == 1:
            v = basis[:, 0]
            v = v if v.sum() >= 0 else -v
        else:
            # eig returns near-parallel vectors for a defective eigenvalue; use the true null space
            q = scipy.linalg.null_space(A.T - rho * np.eye(n), rcond=1e-8)
            u = np.full(n, 1.0 / n)
            v = q @ (q.T @ u)
        scale = np.abs(v).max()
        if scale == 0:
            continue
        if np.all(v >= -sign_tol * scale):
            eta = np.clip(v, 0.0, None)
            if eta.sum() <= 0:
                continue
            eta /= eta.sum()
            defect = eigen_defect(P, eta, rho)
            if defect > 1e-8:
                continue
            return QuasiStationaryMeasure(eta, rho, defect, 0, "dense")
    raise QSMError("dense oracle found no nonnegative leading eigenvector")


@dataclass(frozen=True)
class ResidualReport:
    defect: float
    k_step: tuple[float, ...]
    rho_from_rowsums: float

    @property
    def max_k_step(self) -> float:
        return max(self.k_step) if self.k_step else 0.0


def check_qsm(P: UlamOperator, qsm: QuasiStationaryMeasure, k_check: int = 5) -> ResidualReport:
    """|rho eta - eta P|_inf and |rho^k eta - eta P^k|_inf for k = 1..k_check."""
    eta, rho = qsm.eta, qsm.rho
    PT = P.matrix.T.tocsr()
    v = eta.copy()
    ks = []
    for k in range(1, k_check + 1):
        v = PT @ v
        ks.append(float(np.max(np.abs(rho ** k * eta - v))))
    return ResidualReport(ks[0] if ks else eigen_defect(P, eta, rho), tuple(ks), float(eta @ P.row_sums))


def lower_fixed_point(spec: SystemSpec, lo: float = 0.2, hi: float = 0.5, omega: float | None = None,
                      xtol: float = 1e-10) -> float:
    """Root of f(x, omega) = x on [lo, hi] by bisection (omega defaults to the lower control bound).

    The displacement is taken without the mod-1 reduction so the root is that of the lifted map.
    """
    w = spec.controls.lo if omega is None else omega
    k = 1 if spec.family == "circle1" else 2

    def g(x):
        return spec.sigma * np.cos(2 * np.pi * k * (x - spec.shift)) + spec.amp * w + spec.alpha

    return float(scipy.optimize.bisect(g, lo, hi, xtol=xtol))
