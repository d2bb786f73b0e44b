"""Discretized Laplacians of the conformal family and their eigenproblems.

Every operator is stored in weighted form ``A u = mu W u`` with ``A``
symmetric (flux-form finite differences of ``Delta_0`` times the area
element) and ``W`` the diagonal of ``dx_t``.  Because ``Delta_t =
exp(t f) Delta_0``, only ``W`` depends on ``t``.

Two backends:

* sector: for rotation-invariant ``f`` the angular Fourier mode ``n`` gives a
  periodic 1D operator in ``s``.  A sector eigenvector ``u(s)`` stands for the
  surface function ``u(s) Y_n(phi)`` with ``Y_n`` unit-normalized on the
  circle, so ``u^T W u = 1`` is the ``dx_t`` normalization.
* coupled: the 5-point discretization on the periodic ``(s, phi)`` grid, for
  factors that depend on ``phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import FactorizationBreakdown, symmetric_eigh, symmetric_factor
from .surface import ConformalFamily, TWO_PI

MAX_COUPLED_UNKNOWNS = 32768
DENSE_LIMIT = 4096
SHIFT_RETRIES = 3


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class SectorOperator:
    n: int
    s: np.ndarray
    h: float
    stiffness: sp.csr_matrix
    weight: np.ndarray
    t: float
    f_values: np.ndarray
    angular_symbol: float

    @property
    def size(self) -> int:
        return self.s.size


@dataclass(frozen=True)
class CoupledOperator:
    s: np.ndarray
    phi: np.ndarray
    stiffness: sp.csr_matrix
    weight: np.ndarray
    t: float
    f_values: np.ndarray

    @property
    def size(self) -> int:
        return self.weight.size

    @property
    def shape2d(self) -> tuple:
        return (self.s.size, self.phi.size)


@dataclass(frozen=True)
class SpectralWindow:
    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("window half-width must be positive")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    def __contains__(self, mu) -> bool:
        return self.lo <= mu <= self.hi


@dataclass
class EigenSolution:
    """Eigenpairs in ascending order, eigenvectors ``dx_t``-normalized (``v^T W v = 1``)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    t: float
    backend: str
    weight: np.ndarray
    residuals: np.ndarray
    f_values: Optional[np.ndarray] = None
    sector: Optional[np.ndarray] = None
    parity: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def masses(self) -> np.ndarray:
        """``integral f |phi_j|^2 dx_t`` for every returned mode."""
        if self.f_values is None:
            raise ValueError("solution carries no factor values")
        return np.einsum("i,i,ij->j", self.f_values, self.weight, self.eigenvectors ** 2)


def _cyclic_tridiagonal(diag, lower_upper, n):
    """Symmetric periodic tridiagonal matrix; ``lower_upper[i]`` couples ``i`` and ``i+1 mod n``."""
    i = np.arange(n)
    j = (i + 1) % n
    rows = np.concatenate([i, i, j])
    cols = np.concatenate([i, j, i])
    vals = np.concatenate([diag, lower_upper, lower_upper])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _s_stiffness(family: ConformalFamily, N_s: int):
    surf = family.base
    h = surf.L_s / N_s
    s = surf.grid(N_s)
    r = surf.r(s)
    r_half = surf.r(s + 0.5 * h)  # r_{i+1/2}
    flux = r_half / h
    diag = flux + np.roll(flux, 1)
    return s, h, r, diag, -flux


def assemble_sector(family: ConformalFamily, n: int, t: float, N_s: int,
                    angular_symbol: Optional[float] = None) -> SectorOperator:
    """Weighted sector operator for ``-(1/r)(r u')' + n^2 u / r^2 = mu exp(-t f) u``.

    ``angular_symbol`` replaces ``n^2`` (used to mirror the discrete angular
    Laplacian of the coupled backend).
    """
    if not family.separable:
        raise SpectralError("sector decomposition needs a rotation-invariant factor")
    if N_s < 64 or N_s % 2:
        raise ValueError("N_s must be even and at least 64")
    if n < 0:
        raise ValueError("angular quantum number must be nonnegative")
    s, h, r, diag, off = _s_stiffness(family, N_s)
    sym = float(n * n) if angular_symbol is None else float(angular_symbol)
    A = _cyclic_tridiagonal(diag + sym * h / r, off, N_s)
    f = family.factor(s)
    w = r * np.exp(-t * f) * h
    return SectorOperator(n, s, h, A, w, float(t), f, sym)


def fd_angular_symbol(n: int, N_phi: int) -> float:
    """Eigenvalue of the periodic 3-point angular Laplacian on ``cos(n phi)``."""
    h = TWO_PI / N_phi
    return (2.0 * math.sin(0.5 * n * h) / h) ** 2


def assemble_coupled(family: ConformalFamily, t: float, N_s: int, N_phi: int,
                     max_unknowns: int = MAX_COUPLED_UNKNOWNS) -> CoupledOperator:
    """5-point flux-form ``Delta_0`` on the periodic ``(s, phi)`` grid, index ``i * N_phi + j``."""
    if N_s * N_phi > max_unknowns:
        raise SpectralError(f"memory budget exceeded: {N_s}x{N_phi} > {max_unknowns} unknowns")
    if N_s < 4 or N_phi < 4:
        raise ValueError("grid too small")
    s, h_s, r, diag, off = _s_stiffness(family, N_s)
    h_phi = TWO_PI / N_phi
    phi = np.arange(N_phi) * h_phi
    A_s = _cyclic_tridiagonal(diag, off, N_s)
    L_phi = _cyclic_tridiagonal(np.full(N_phi, 2.0), np.full(N_phi, -1.0), N_phi)
    A = (sp.kron(A_s, sp.identity(N_phi)) * h_phi
         + sp.kron(sp.diags(h_s / r), L_phi) / h_phi).tocsr()
    S, P = np.meshgrid(s, phi, indexing="ij")
    f = family.factor(S, P).ravel()
    w = (np.repeat(r, N_phi) * h_s * h_phi) * np.exp(-t * f)
    return CoupledOperator(s, phi, A, w, float(t), f)


# -- eigen-solves -----------------------------------------------------------

def _fix_signs(V: np.ndarray) -> np.ndarray:
    for k in range(V.shape[1]):
        col = V[:, k]
        big = np.abs(col) > 1e-8 * np.max(np.abs(col))
        idx = int(np.argmax(big))
        if col[idx] < 0:
            V[:, k] = -col
    return V


def _residuals(A, w, mu, V) -> np.ndarray:
    if V.shape[1] == 0:
        return np.zeros(0)
    R = A @ V - (w[:, None] * V) * mu[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(w[:, None] * V, axis=0)


def _pack(op, mu, V, backend, **meta) -> EigenSolution:
    V = _fix_signs(np.asarray(V, dtype=float))
    res = _residuals(op.stiffness, op.weight, mu, V)
    return EigenSolution(np.asarray(mu, dtype=float), V, op.t, backend, op.weight, res,
                         f_values=op.f_values, meta=dict(meta))


def _dense_reduced(op):
    d = 1.0 / np.sqrt(op.weight)
    A = op.stiffness.toarray()
    return d, d[:, None] * A * d[None, :]


def _dense_eigh(op, *, index=None, upper=None, method="lapack"):
    if op.size > DENSE_LIMIT:
        raise SpectralError(f"dense solve limited to {DENSE_LIMIT} unknowns, got {op.size}")
    d, B = _dense_reduced(op)
    try:
        if method == "native":
            mu, Y = symmetric_eigh(B)
            if index is not None:
                mu, Y = mu[index[0]:index[1] + 1], Y[:, index[0]:index[1] + 1]
            elif upper is not None:
                keep = mu <= upper
                mu, Y = mu[keep], Y[:, keep]
        elif index is not None:
            mu, Y = sla.eigh(B, subset_by_index=list(index), driver="evr")
        elif upper is not None:
            mu, Y = sla.eigh(B, subset_by_value=(-np.inf, upper), driver="evr")
        else:
            mu, Y = sla.eigh(B)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SpectralError(f"dense eigensolver failed: {exc}") from exc
    return mu, d[:, None] * Y


def solve_sector(op: SectorOperator, k_max: int, method: str = "lapack") -> EigenSolution:
    """The ``k_max`` smallest eigenpairs of a sector operator (dense route).

    ``method="native"`` uses the in-repo Householder/QL solver instead of LAPACK.
    """
    k = min(int(k_max), op.size)
    if k < 1:
        raise ValueError("k_max must be positive")
    mu, V = _dense_eigh(op, index=(0, k - 1), method=method)
    sol = _pack(op, mu, V, f"separable({op.n})")
    sol.sector = np.full(k, op.n)
    return sol


def _shifted_factor(op, sigma: float, scale: float):
    """Factor ``A - sigma W``, nudging the shift on breakdown."""
    for attempt in range(SHIFT_RETRIES + 1):
        shift = sigma + attempt * 1e-8 * scale
        try:
            lu, diag = symmetric_factor(op.stiffness - shift * sp.diags(op.weight))
            return shift, lu, diag
        except FactorizationBreakdown:
            continue
    raise SpectralError(f"factorization broke down at shift {sigma} after {SHIFT_RETRIES} retries")


def count_below(op, sigma: float, scale: Optional[float] = None) -> int:
    """Inertia count of eigenvalues below ``sigma``."""
    _, _, diag = _shifted_factor(op, sigma, scale if scale is not None else max(abs(sigma), 1.0))
    return int(np.count_nonzero(diag < 0))


def _start_vector(N: int) -> np.ndarray:
    """Fixed ARPACK start vector, so results do not depend on call history."""
    return np.random.default_rng(N).standard_normal(N)


def _rayleigh_ritz(op, V):
    A, w = op.stiffness, op.weight
    G = V.T @ (w[:, None] * V)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Vo = sla.solve_triangular(L, V.T, lower=True).T
    P = Vo.T @ (A @ Vo)
    theta, Y = np.linalg.eigh(0.5 * (P + P.T))
    return theta, Vo @ Y


def eigs_in_window(op, window: SpectralWindow) -> EigenSolution:
    """All eigenpairs with ``mu`` in ``[lo, hi]``, certified by two inertia counts.

    Works for sector and coupled operators.  The number of returned pairs
    always equals ``inertia(hi) - inertia(lo)``; a mismatch raises.
    """
    if window.lo <= 0:
        raise ValueError("window must lie in (0, inf)")
    lam = window.center
    n_lo = count_below(op, window.lo, lam)
    n_hi = count_below(op, window.hi, lam)
    count = n_hi - n_lo
    backend = "coupled" if isinstance(op, CoupledOperator) else f"separable({op.n})"
    meta = dict(count=count, inertia_lo=n_lo, inertia_hi=n_hi, window=(window.lo, window.hi))
    N = op.size
    if count == 0:
        empty = np.zeros((N, 0))
        sol = _pack(op, np.zeros(0), empty, backend, **meta)
    elif N <= 400 or count + 8 >= N // 2:
        mu, V = _dense_eigh(op, index=(n_lo, n_hi - 1))
        sol = _pack(op, mu, V, backend, **meta)
    else:
        shift, lu, _ = _shifted_factor(op, lam, lam)
        Winv = sp.diags(op.weight)
        OPinv = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
        k = count + 2
        for _ in range(4):
            k = min(k, N - 2)
            try:
                vals, vecs = spla.eigsh(op.stiffness, k=k, M=Winv, sigma=shift, OPinv=OPinv,
                                        which="LM", tol=0.0, v0=_start_vector(N))
            except spla.ArpackNoConvergence as exc:
                raise SpectralError(f"shift-invert iteration did not converge: {exc}") from exc
            order = np.argsort(np.abs(vals - lam), kind="stable")[:count]
            chosen = vals[order]
            if (chosen.size == count and np.all(chosen >= window.lo - 1e-9 * lam)
                    and np.all(chosen <= window.hi + 1e-9 * lam)):
                break
            k += 4
        else:
            raise SpectralError("windowed solve could not reproduce the certified count")
        theta, V = _rayleigh_ritz(op, vecs[:, order])
        res = _residuals(op.stiffness, op.weight, theta, V)
        if np.any(res > 1e-8 * np.maximum(1.0, np.abs(theta))):
            theta, V = _rayleigh_ritz(op, lu.solve(op.weight[:, None] * V))
        sol = _pack(op, theta, V, backend, **meta)
    if isinstance(op, SectorOperator):
        sol.sector = np.full(len(sol), op.n)
    return sol


def lowest_eigenpairs(op, k: int) -> EigenSolution:
    """The ``k`` smallest eigenpairs via shift-invert below the (nonnegative) spectrum."""
    N = op.size
    if k + 8 >= N // 2 or N <= 400:
        mu, V = _dense_eigh(op, index=(0, k - 1))
    else:
        lu, _ = symmetric_factor(op.stiffness + sp.diags(op.weight))
        OPinv = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
        vals, vecs = spla.eigsh(op.stiffness, k=k, M=sp.diags(op.weight), sigma=-1.0,
                                OPinv=OPinv, which="LM", tol=0.0, v0=_start_vector(N))
        mu, V = _rayleigh_ritz(op, vecs)
    backend = "coupled" if isinstance(op, CoupledOperator) else f"separable({op.n})"
    sol = _pack(op, mu, V, backend)
    if isinstance(op, SectorOperator):
        sol.sector = np.full(len(sol), op.n)
    return sol


def sector_ground_state(op: SectorOperator) -> tuple[float, np.ndarray]:
    """Lowest sector eigenpair (shift-invert below the Clairaut barrier)."""
    sol = lowest_eigenpairs(op, 1)
    return float(sol.eigenvalues[0]), sol.eigenvectors[:, 0]


def nearest_eigenvalue(op, sigma: float) -> float:
    N = op.size
    if N <= 400:
        mu, _ = _dense_eigh(op)
        return float(mu[np.argmin(np.abs(mu - sigma))])
    shift, lu, _ = _shifted_factor(op, sigma, max(abs(sigma), 1.0))
    OPinv = spla.LinearOperator((N, N), matvec=lu.solve, dtype=float)
    vals = spla.eigsh(op.stiffness, k=1, M=sp.diags(op.weight), sigma=shift, OPinv=OPinv,
                      which="LM", tol=0.0, v0=_start_vector(N), return_eigenvectors=False)
    return float(vals[0])


def global_spectrum(family: ConformalFamily, t: float, Lambda_max: float, N_s: int = 512,
                    angular: str = "exact", N_phi: Optional[int] = None,
                    method: str = "lapack") -> EigenSolution:
    """Merged sector spectrum up to ``Lambda_max``, each ``n >= 1`` sector counted twice.

    ``angular="fd"`` uses the discrete angular symbol of an ``N_phi``-point
    grid so the result is the exact spectrum of :func:`assemble_coupled`.
    Eigenvectors are the ``s``-profiles; ``sector`` and ``parity`` (0 = cos,
    1 = sin) label the angular part.
    """
    if Lambda_max <= 0:
        raise ValueError("Lambda_max must be positive")
    surf = family.base
    upper = Lambda_max * (1.0 + 1e-10)
    if angular == "exact":
        n_max = math.ceil(math.sqrt(Lambda_max) * surf.r_max) + 2
        sectors = [(n, None, 1 if n == 0 else 2) for n in range(n_max + 1)]
    elif angular == "fd":
        if not N_phi:
            raise ValueError("angular='fd' needs N_phi")
        sectors = []
        for n in range(N_phi // 2 + 1):
            sym = fd_angular_symbol(n, N_phi)
            if sym / surf.r_max ** 2 > upper:
                break
            mult = 1 if n == 0 or 2 * n == N_phi else 2
            sectors.append((n, sym, mult))
    else:
        raise ValueError(f"unknown angular discretization {angular!r}")

    mus, vecs, labels, parities = [], [], [], []
    weight = f_values = None
    for n, sym, mult in sectors:
        op = assemble_sector(family, n, t, N_s, angular_symbol=sym)
        weight, f_values = op.weight, op.f_values
        if op.angular_symbol / surf.r_max ** 2 > upper:
            continue
        mu, V = _dense_eigh(op, upper=upper, method=method)
        for p in range(mult):
            mus.append(mu)
            vecs.append(V)
            labels.append(np.full(mu.size, n))
            parities.append(np.full(mu.size, p))
    mu = np.concatenate(mus)
    V = np.concatenate(vecs, axis=1)
    sector = np.concatenate(labels)
    parity = np.concatenate(parities)
    order = np.lexsort((parity, sector, mu))
    V = _fix_signs(V[:, order])
    mu = mu[order]
    # residual per sector column; recompute with the matching operator symbol
    res = np.empty(mu.size)
    for n, sym, _ in sectors:
        cols = np.nonzero(sector[order] == n)[0]
        if cols.size:
            op = assemble_sector(family, n, t, N_s, angular_symbol=sym)
            res[cols] = _residuals(op.stiffness, op.weight, mu[cols], V[:, cols])
    return EigenSolution(mu, V, float(t), "separable", weight, res, f_values=f_values,
                         sector=sector[order], parity=parity[order],
                         meta=dict(Lambda_max=Lambda_max, N_s=N_s, angular=angular))
