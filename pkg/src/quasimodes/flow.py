"""Eigenvalue branches ``mu_j(t)`` of the conformal family.

Branches are tracked by sorted index: min-max ordering and monotonicity in
``t`` make that consistent, and crossings only matter for the derivative
check, which refuses to run near them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spectral import EigenSolution, global_spectrum
from .surface import ConformalFamily

GAP_FLOOR = 1e-3


class NearCrossingError(ValueError):
    pass


@dataclass
class BranchTable:
    t_grid: np.ndarray
    mu: np.ndarray          # (T, J)
    mass: np.ndarray        # (T, J)
    gap: np.ndarray         # (T, J)
    sector: Optional[np.ndarray] = None
    N_s: int = 0
    vectors: list = field(default_factory=list)

    @property
    def J(self) -> int:
        return self.mu.shape[1]


def branch_gaps(mu: np.ndarray, sector: Optional[np.ndarray] = None, parity=None) -> np.ndarray:
    """Distance to the nearest other eigenvalue, ignoring the exact cos/sin partner."""
    J = mu.size
    gap = np.full(J, np.inf)
    for j in range(J):
        for k in range(max(0, j - 2), min(J, j + 3)):
            if k == j:
                continue
            partner = (sector is not None and sector[k] == sector[j] and sector[j] > 0
                       and parity[k] != parity[j] and mu[k] == mu[j])
            if not partner:
                gap[j] = min(gap[j], abs(mu[k] - mu[j]))
    return gap


def _solve(family: ConformalFamily, t: float, Lambda: float, N_s: int) -> EigenSolution:
    return global_spectrum(family, t, Lambda, N_s=N_s)


def build_branches(family: ConformalFamily, Lambda_max: float,
                   t_grid: Optional[Sequence[float]] = None, N_s: int = 256,
                   keep_vectors: bool = False, jobs: int = 1) -> BranchTable:
    """Eigenvalues, masses and gaps for every ``mu_j(0) <= Lambda_max`` across ``t_grid``.

    Later ``t`` need a larger cutoff: the Rayleigh quotient gives
    ``mu_j(t) <= exp(t max f) mu_j(0)``.
    """
    t_grid = np.asarray(family.t_grid if t_grid is None else t_grid, dtype=float)
    base = _solve(family, 0.0, Lambda_max, N_s)
    J = len(base)
    if J < 2:
        raise ValueError("Lambda_max too small: fewer than two eigenvalues")
    boost = math.exp(family.factor.max_value)

    def one(t):
        return base if t == 0.0 else _solve(family, float(t), Lambda_max * boost * (1 + 1e-9), N_s)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            sols = list(pool.map(one, t_grid))
    else:
        sols = [one(t) for t in t_grid]

    T = t_grid.size
    mu = np.empty((T, J))
    mass = np.empty((T, J))
    gap = np.empty((T, J))
    sector = np.empty((T, J), dtype=int)
    vectors = []
    for k, sol in enumerate(sols):
        if len(sol) < J:
            raise RuntimeError(f"spectrum at t={t_grid[k]} has only {len(sol)} of {J} branches")
        mu[k] = sol.eigenvalues[:J]
        mass[k] = sol.masses[:J]
        sector[k] = sol.sector[:J]
        gap[k] = branch_gaps(sol.eigenvalues[:J + 2], sol.sector[:J + 2], sol.parity[:J + 2])[:J]
        if keep_vectors:
            vectors.append(sol.eigenvectors[:, :J])
    return BranchTable(t_grid, mu, mass, gap, sector, N_s, vectors)


@dataclass(frozen=True)
class HadamardReport:
    j: int
    t: float
    delta: float
    mu: float
    mass: float
    predicted: float
    fd: float
    fd_half: float
    richardson: float

    @property
    def residual(self) -> float:
        return abs(self.fd - self.predicted)

    @property
    def residual_half(self) -> float:
        return abs(self.fd_half - self.predicted)

    @property
    def residual_richardson(self) -> float:
        return abs(self.richardson - self.predicted)

    @property
    def relative(self) -> float:
        return self.residual_richardson / self.mu


def check_hadamard(table: BranchTable, family: ConformalFamily, j: int, t: float,
                   delta: float = 1e-3, gap_floor: float = GAP_FLOOR) -> HadamardReport:
    """Compare the centered ``t``-difference of ``mu_j`` with ``mu_j * mass_j``."""
    k = int(np.argmin(np.abs(table.t_grid - t)))
    if abs(table.t_grid[k] - t) > 1e-12:
        raise ValueError(f"t={t} not on the table grid")
    if t - delta < 0 or t + delta > 1:
        raise ValueError("derivative check needs t +- delta inside [0, 1]")
    mu, mass, gap = table.mu[k, j], table.mass[k, j], table.gap[k, j]
    if gap <= gap_floor * mu:
        raise NearCrossingError(f"branch {j} at t={t}: gap {gap:.3g} below {gap_floor} * mu")
    Lambda = float(table.mu[0, -1]) * math.exp(family.factor.max_value) * (1 + 1e-9)

    def mu_at(tt):
        return _solve(family, tt, Lambda, table.N_s).eigenvalues[j]

    fd = (mu_at(t + delta) - mu_at(t - delta)) / (2 * delta)
    fd_half = (mu_at(t + delta / 2) - mu_at(t - delta / 2)) / delta
    rich = (4.0 * fd_half - fd) / 3.0
    return HadamardReport(j, float(t), delta, float(mu), float(mass), float(mu * mass),
                          float(fd), float(fd_half), float(rich))


@dataclass(frozen=True)
class SojournReport:
    measured: float
    bound: float
    hypothesis_met: bool
    verdict: bool
    min_slope: float


def sojourn_measure(F: Sequence[float], t_grid: Sequence[float], interval: tuple[float, float],
                    m_floor: float, grid_tol: float = 1e-2) -> SojournReport:
    """Measure of ``{t : F(t) in I}`` for a nondecreasing piecewise-linear ``F``.

    The bound is ``|I| / m_floor``.  The hypothesis ``F' >= m_floor`` is
    checked on every grid segment that meets ``F^{-1}(I)``.
    """
    F = np.asarray(F, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    lo, hi = interval
    if np.any(np.diff(F) < -1e-12 * np.max(np.abs(F))):
        raise ValueError("F must be nondecreasing")
    F = np.maximum.accumulate(F)
    measured = 0.0
    min_slope = math.inf
    for k in range(t.size - 1):
        a, b = F[k], F[k + 1]
        if b < lo or a > hi:
            continue
        dt = t[k + 1] - t[k]
        slope = (b - a) / dt
        min_slope = min(min_slope, slope)
        if b == a:
            measured += dt
            continue
        ta = t[k] + dt * (max(lo, a) - a) / (b - a)
        tb = t[k] + dt * (min(hi, b) - a) / (b - a)
        measured += max(0.0, tb - ta)
    bound = (hi - lo) / m_floor if m_floor > 0 else math.inf
    met = m_floor > 0 and (min_slope == math.inf or min_slope >= m_floor * (1 - grid_tol))
    ok = met and measured <= bound * (1 + grid_tol)
    return SojournReport(measured, bound, met, ok, min_slope)


def monotonicity_audit(table: BranchTable, tol_rel: float = 1e-9) -> list[tuple[int, int]]:
    """``(j, k)`` with ``mu_j(t_{k+1}) < mu_j(t_k) - tol_rel * max(mu_j, 1)``.

    The floor of 1 keeps the zero eigenvalue, known only to roundoff, out of the report.
    """
    mu = table.mu
    drop = mu[1:] < mu[:-1] - tol_rel * np.maximum(np.abs(mu[:-1]), 1.0)
    ks, js = np.nonzero(drop)
    return sorted((int(j), int(k)) for k, j in zip(ks, js))
