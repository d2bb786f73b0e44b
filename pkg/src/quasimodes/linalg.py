"""Dense symmetric eigensolver and sparse inertia utilities.

``symmetric_eigh`` is a self-contained Householder tridiagonalization
followed by implicit-shift QL iteration with Wilkinson shifts.  It is
exact-arithmetic equivalent to LAPACK ``dsyev`` and is kept as an
independent route for cross-checking; production solves go through LAPACK.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

MAX_SWEEPS = 30


class ConvergenceError(RuntimeError):
    pass


class FactorizationBreakdown(RuntimeError):
    pass


def householder_tridiagonalize(a: np.ndarray):
    """Reduce a symmetric matrix to tridiagonal form ``T = Q^T a Q``.

    Returns ``(d, e, Q)`` with diagonal ``d``, off-diagonal ``e`` (length n-1)
    and the accumulated orthogonal ``Q``.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    Q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vnorm2 = v @ v
        if vnorm2 == 0.0:
            continue
        v /= math.sqrt(vnorm2)
        # A <- H A H with H = I - 2 v v^T acting on the trailing block
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        kk = v @ p
        w = 2.0 * (p - kk * v)
        sub -= np.outer(v, w) + np.outer(w, v)
        a[k + 1:, k] = 0.0
        a[k, k + 1:] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
        Qb = Q[:, k + 1:]
        Qb -= 2.0 * np.outer(Qb @ v, v)
    d = np.diag(a).copy()
    e = np.diag(a, -1).copy()
    return d, e, Q


def tridiagonal_ql(d, e, Z=None, max_sweeps: int = MAX_SWEEPS):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    ``Z`` (if given) is updated in place with the rotations so that its
    columns become eigenvectors of the original matrix.
    """
    d = np.array(d, dtype=float, copy=True)
    n = d.size
    e = np.append(np.array(e, dtype=float, copy=True), 0.0)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                raise ConvergenceError(f"QL did not converge for eigenvalue {l} in {max_sweeps} sweeps")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if Z is not None:
                    zi1 = Z[:, i + 1].copy()
                    Z[:, i + 1] = s * Z[:, i] + c * zi1
                    Z[:, i] = c * Z[:, i] - s * zi1
                i -= 1
            if underflow and i >= l:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d


def symmetric_eigh(a: np.ndarray):
    """All eigenpairs of a dense symmetric matrix, ascending."""
    d, e, Q = householder_tridiagonalize(a)
    w = tridiagonal_ql(d, e, Q)
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def symmetric_factor(M: sp.spmatrix):
    """Sparse ``L D L^T``-equivalent factorization via SuperLU in symmetric mode.

    Diagonal pivoting is forced so that row and column permutations agree;
    by Sylvester's law the signs of ``diag(U)`` then give the inertia of ``M``.
    """
    M = sp.csc_matrix(M)
    try:
        lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise FactorizationBreakdown(str(exc)) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise FactorizationBreakdown("factorization used off-diagonal pivots")
    diag = lu.U.diagonal()
    scale = abs(M).max() if M.nnz else 1.0
    if np.min(np.abs(diag)) <= 1e-13 * scale:
        raise FactorizationBreakdown("zero pivot")
    return lu, diag


def inertia_below(A: sp.spmatrix, w: np.ndarray, sigma: float) -> int:
    """Number of eigenvalues of ``A x = mu diag(w) x`` strictly below ``sigma``."""
    M = sp.csc_matrix(A) - sigma * sp.diags(w, format="csc")
    _, diag = symmetric_factor(M)
    return int(np.count_nonzero(diag < 0))
