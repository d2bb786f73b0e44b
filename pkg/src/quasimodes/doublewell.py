"""Symmetric double well ``H = -hbar^2 d^2/dx^2 + V(x)`` on ``[-X, X]``.

Single-well Gaussians are good quasi-modes, yet every exact eigenfunction
is even or odd and so splits its mass evenly between the wells.  The
audit quantifies that gap: the quasi-mode lies close to the span of the
lowest doublet and far from each member.

The grid has an odd number of interior nodes so that ``x = 0`` is a node;
the Hamiltonian then splits into an even block (Neumann-like at 0) and an
odd block (Dirichlet at 0), each a symmetric tridiagonal matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite
from scipy.linalg import eigh_tridiagonal

TRUNCATION_TOL = 1e-10


class TruncationError(RuntimeError):
    pass


class WidthError(ValueError):
    pass


def quartic(x):
    return (x * x - 1.0) ** 2


def quartic_d2(x):
    return 12.0 * x * x - 4.0


@dataclass(frozen=True)
class DoubleWellProblem:
    hbar: float
    potential: Callable = quartic
    potential_d2: Callable = quartic_d2
    a: float = 1.0
    b: float = 1.0
    X_cut: float = 3.0
    N_x: int = 2001

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.N_x < 2000 or self.N_x % 2 == 0:
            raise ValueError("N_x must be odd and at least 2000")
        x = self.x
        V = self.potential(x)
        if np.max(np.abs(V - self.potential(-x))) > 1e-12:
            raise ValueError("potential is not even on the grid")
        if abs(self.potential(self.a)) > 1e-12 or abs(self.potential(-self.a)) > 1e-12:
            raise ValueError("potential must vanish at +-a")
        if not abs(self.potential(0.0) - self.b) <= 1e-12 or self.b <= 0:
            raise ValueError("potential must equal b > 0 at the origin")

    @property
    def dx(self) -> float:
        return 2.0 * self.X_cut / (self.N_x + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior nodes; the Dirichlet nodes are at ``+-X_cut``."""
        half = (self.N_x - 1) // 2
        return np.arange(-half, half + 1) * self.dx

    @property
    def curvature(self) -> float:
        """``V''(a)``."""
        return float(self.potential_d2(self.a))

    @property
    def beta(self) -> float:
        """Gaussian exponent: ``u ~ exp(-beta (x - a)^2 / 2)`` with ``beta = sqrt(V''/2) / hbar``."""
        return math.sqrt(0.5 * self.curvature) / self.hbar

    @property
    def frequency(self) -> float:
        """Level spacing of the harmonic well: ``2 hbar sqrt(V''/2)``."""
        return 2.0 * self.hbar * math.sqrt(0.5 * self.curvature)

    def harmonic_level(self, m1: int = 0) -> float:
        return (m1 + 0.5) * self.frequency

    def with_cut(self, X_cut: float) -> "DoubleWellProblem":
        """Same spacing, wider box."""
        n = int(round(2.0 * X_cut / self.dx)) - 1
        n += 1 - n % 2
        return DoubleWellProblem(self.hbar, self.potential, self.potential_d2, self.a, self.b,
                                 X_cut, n)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``H u`` with Dirichlet ends."""
        c = self.hbar ** 2 / self.dx ** 2
        out = (2.0 * c + self.potential(self.x)) * u
        out[1:] -= c * u[:-1]
        out[:-1] -= c * u[1:]
        return out


@dataclass
class WellSpectrum:
    problem: DoubleWellProblem
    energies: np.ndarray
    vectors: np.ndarray      # columns normalized with sum(phi^2) dx = 1
    parity: np.ndarray       # +1 even, -1 odd
    truncation_shift: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.energies.size

    @property
    def splitting(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def parity_alternates(self) -> bool:
        return bool(np.all(self.parity[::2] == 1) and np.all(self.parity[1::2] == -1))

    def right_mass(self, j: int) -> float:
        """``int_{x>0} phi_j^2``, trapezoid-style half weight at the origin."""
        phi = self.vectors[:, j]
        mid = phi.size // 2
        dx = self.problem.dx
        return float(dx * (np.sum(phi[mid + 1:] ** 2) + 0.5 * phi[mid] ** 2))


def _parity_blocks(p: DoubleWellProblem, k: int):
    c = p.hbar ** 2 / p.dx ** 2
    x = p.x
    mid = x.size // 2
    Vh = p.potential(x[mid:])
    diag = 2.0 * c + Vh
    off = np.full(Vh.size - 1, -c)
    # even block, first unknown rescaled by sqrt(2) to keep the matrix symmetric
    off_e = off.copy()
    off_e[0] = -math.sqrt(2.0) * c
    Ee, Ye = eigh_tridiagonal(diag, off_e, select="i", select_range=(0, k - 1))
    Eo, Yo = eigh_tridiagonal(diag[1:], off[1:], select="i", select_range=(0, k - 1))
    return Ee, Ye, Eo, Yo


def _unfold(Y, even: bool, mid: int, dx: float) -> np.ndarray:
    if even:
        half = Y.copy()
        half[0] /= math.sqrt(2.0)
        full = np.concatenate([half[:0:-1], half])
    else:
        full = np.concatenate([-Y[::-1], np.zeros((1,) + Y.shape[1:]), Y])
    full /= np.sqrt(np.sum(full ** 2, axis=0) * dx)
    sign = np.sign(full[mid + 1:][np.argmax(np.abs(full[mid + 1:]), axis=0), np.arange(full.shape[1])])
    return full * sign


def _solve_raw(p: DoubleWellProblem, k_max: int):
    k = (k_max + 1) // 2 + 1
    Ee, Ye, Eo, Yo = _parity_blocks(p, k)
    mid = p.x.size // 2
    E = np.concatenate([Ee, Eo])
    V = np.concatenate([_unfold(Ye, True, mid, p.dx), _unfold(Yo, False, mid, p.dx)], axis=1)
    par = np.concatenate([np.ones(k, dtype=int), -np.ones(k, dtype=int)])
    order = np.argsort(E, kind="stable")[:k_max]
    return E[order], V[:, order], par[order]


def solve_wells(problem: DoubleWellProblem, k_max: int = 6, check_truncation: bool = True) -> WellSpectrum:
    E, V, par = _solve_raw(problem, k_max)
    if problem.potential(problem.X_cut) < 10 * E[-1]:
        raise TruncationError(f"V(X_cut)={problem.potential(problem.X_cut):.3g} below 10 E_max")
    shift = 0.0
    if check_truncation:
        E2, _, _ = _solve_raw(problem.with_cut(2 * problem.X_cut), k_max)
        shift = float(np.max(np.abs(E2 - E)))
        if shift > TRUNCATION_TOL:
            raise TruncationError(f"doubling X_cut moved an eigenvalue by {shift:.3g}")
    # parity from the samples themselves, as a check on the block bookkeeping
    measured = np.where(np.max(np.abs(V - V[::-1]), axis=0) < np.max(np.abs(V - -V[::-1]), axis=0), 1, -1)
    if not np.array_equal(measured, par):
        raise RuntimeError("parity bookkeeping disagrees with the eigenvectors")
    return WellSpectrum(problem, E, V, par, shift)


@dataclass
class WellQuasimode:
    problem: DoubleWellProblem
    which: str
    m1: int
    u: np.ndarray
    lam: float

    @property
    def defect(self) -> float:
        r = self.problem.apply(self.u) - self.lam * self.u
        return float(math.sqrt(np.sum(r * r) * self.problem.dx))

    @property
    def left_mass(self) -> float:
        x = self.problem.x
        return float(np.sum(self.u[x < 0] ** 2) * self.problem.dx)

    @property
    def right_mass(self) -> float:
        x = self.problem.x
        return float(np.sum(self.u[x > 0] ** 2) * self.problem.dx)


def build_well_quasimode(problem: DoubleWellProblem, which: str = "right", m1: int = 0) -> WellQuasimode:
    """Harmonic-oscillator state of the well at ``+-a`` and its level ``(2 m1 + 1) hbar sqrt(V''/2)``."""
    if which not in ("left", "right"):
        raise ValueError("which must be 'left' or 'right'")
    width = 1.0 / math.sqrt(problem.beta)
    if width >= problem.a / 3:
        raise WidthError(f"Gaussian width {width:.3g} not below a/3; hbar too large")
    center = problem.a if which == "right" else -problem.a
    y = (problem.x - center) * math.sqrt(problem.beta)
    coef = np.zeros(m1 + 1)
    coef[m1] = 1.0
    u = hermite.hermval(y, coef) * np.exp(-0.5 * y * y)
    u /= math.sqrt(np.sum(u * u) * problem.dx)
    return WellQuasimode(problem, which, m1, u, problem.harmonic_level(m1))


@dataclass(frozen=True)
class ArnoldReport:
    hbar: float
    E_even: float
    E_odd: float
    splitting: float
    defect: float
    overlap_even: float
    overlap_odd: float
    span_residual: float
    min_single_mode_distance: float
    parseval_error: float

    @property
    def both_in_window(self) -> bool:
        """Does ``[lambda - defect, lambda + defect]`` hold the whole doublet?"""
        return self.splitting < self.defect


def arnold_audit(spec: WellSpectrum, qm: WellQuasimode) -> ArnoldReport:
    dx = spec.problem.dx
    c = spec.vectors.T @ qm.u * dx
    even = int(np.flatnonzero(spec.parity == 1)[0])
    odd = int(np.flatnonzero(spec.parity == -1)[0])
    P = spec.vectors[:, [even, odd]] @ c[[even, odd]]
    span_res = float(math.sqrt(np.sum((qm.u - P) ** 2) * dx))
    dists = [math.sqrt(np.sum((qm.u - c[j] * spec.vectors[:, j]) ** 2) * dx) for j in range(len(spec))]
    oe, oo = float(c[even] ** 2), float(c[odd] ** 2)
    return ArnoldReport(spec.problem.hbar, float(spec.energies[even]), float(spec.energies[odd]),
                        spec.splitting, qm.defect, oe, oo, span_res, float(min(dists)),
                        abs(oe + oo + span_res ** 2 - 1.0))


@dataclass(frozen=True)
class SplittingFit:
    hbar: np.ndarray
    splitting: np.ndarray
    slope: float
    intercept: float
    r2: float


def splitting_sweep(hbars: Sequence[float] = (0.2, 0.15, 0.1, 0.08), jobs: int = 1,
                    **kw) -> SplittingFit:
    """Fit ``log Delta E = intercept + slope / hbar``."""
    def one(h):
        return solve_wells(DoubleWellProblem(h, **kw), k_max=2).splitting

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            dE = np.array(list(pool.map(one, hbars)))
    else:
        dE = np.array([one(h) for h in hbars])
    x = 1.0 / np.asarray(hbars, dtype=float)
    y = np.log(dE)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2)
    return SplittingFit(np.asarray(hbars, dtype=float), dE, float(slope), float(intercept), float(r2))


def defect_scaling(hbars: Sequence[float], m1: int = 0, **kw) -> tuple[float, np.ndarray]:
    """Slope of ``log defect`` against ``log hbar`` and the defects."""
    d = np.array([build_well_quasimode(DoubleWellProblem(h, **kw), "right", m1).defect for h in hbars])
    return float(np.polyfit(np.log(hbars), np.log(d), 1)[0]), d
