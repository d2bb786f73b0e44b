"""Equatorial closed geodesics and their linearized Poincare maps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .surface import SurfaceOfRevolution, gauss_curvature, TWO_PI

DEGENERATE_TOL = 1e-10


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClosedGeodesic:
    """A parallel ``s = s_gamma`` with ``r'(s_gamma) = 0``.

    ``stability`` is ``"stable"`` (local max of ``r``), ``"unstable"``
    (local min) or ``"degenerate"``.  A flat profile, where every parallel is
    a geodesic, is represented by a single degenerate entry at ``s = 0``.
    """

    surface: SurfaceOfRevolution
    s_gamma: float
    period: float
    stability: str

    @property
    def curvature(self) -> float:
        return float(gauss_curvature(self.surface, self.s_gamma))

    @property
    def radius(self) -> float:
        return float(self.surface.r(self.s_gamma))


def find_equators(surface: SurfaceOfRevolution, n_grid: int = 4096) -> list[ClosedGeodesic]:
    s = surface.grid(n_grid)
    dr = surface.dr(s)
    if np.max(np.abs(dr)) < DEGENERATE_TOL:
        return [ClosedGeodesic(surface, 0.0, TWO_PI * float(surface.r(0.0)), "degenerate")]

    roots = []
    L = surface.L_s
    h = L / n_grid
    for i in range(n_grid):
        a, b = s[i], s[i] + h
        fa, fb = dr[i], dr[(i + 1) % n_grid]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(surface.dr, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    out = []
    for root in sorted(float(np.mod(x, L)) for x in roots):
        curv = float(surface.d2r(root))
        if abs(curv) < DEGENERATE_TOL:
            kind = "degenerate"
        elif curv < 0:
            kind = "stable"
        else:
            kind = "unstable"
        out.append(ClosedGeodesic(surface, root, TWO_PI * float(surface.r(root)), kind))
    return out


def outer_equator(surface: SurfaceOfRevolution) -> ClosedGeodesic:
    """The stable equator of largest radius."""
    stable = [g for g in find_equators(surface) if g.stability == "stable"]
    if not stable:
        raise ValueError("surface has no stable equator")
    return max(stable, key=lambda g: g.radius)


@dataclass(frozen=True)
class PoincareData:
    monodromy: np.ndarray
    rotation_angle_theta: Optional[float]
    winding_theta_full: Optional[float]
    maslov_p: int = 0
    phase_winding: float = 0.0
    richardson_error: float = 0.0

    @property
    def trace(self) -> float:
        return float(np.trace(self.monodromy))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.monodromy))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.monodromy)


def _jacobi_flow(curvature: Callable[[float], float], period: float, steps: int):
    """RK4 for ``J'' + K J = 0``; returns the fundamental matrix and the phase winding
    of the solution starting at ``(J, J') = (1, 0)``."""
    h = period / steps
    Y = np.eye(2)
    psi = 0.0
    prev = 0.0

    def rhs(sigma, Y):
        k = curvature(sigma)
        return np.array([Y[1], -k * Y[0]])

    for i in range(steps):
        sigma = i * h
        k1 = rhs(sigma, Y)
        k2 = rhs(sigma + 0.5 * h, Y + 0.5 * h * k1)
        k3 = rhs(sigma + 0.5 * h, Y + 0.5 * h * k2)
        k4 = rhs(sigma + h, Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(Y)):
            raise IntegrationError(f"Jacobi integration blew up at step {i}")
        ang = math.atan2(-Y[1, 0], Y[0, 0])
        d = ang - prev
        d -= TWO_PI * round(d / TWO_PI)
        psi += d
        prev = ang
    return Y, psi


def integrate_jacobi(curvature: Callable[[float], float], period: float,
                     steps: Optional[int] = None, maslov_p: int = 0) -> PoincareData:
    """Monodromy of the Jacobi equation over one period, with a half-step Richardson check."""
    if period <= 0:
        raise ValueError("period must be positive")
    steps = steps or 10_000
    if period / steps < 1e-14 * max(period, 1.0):
        raise IntegrationError("step size underflow")
    M, psi = _jacobi_flow(curvature, period, steps)
    M2, psi2 = _jacobi_flow(curvature, period, 2 * steps)
    err = float(np.max(np.abs(M - M2)))
    M = M2
    tr = float(np.trace(M))
    if abs(tr) > 2.0 + 1e-9:
        return PoincareData(M, None, None, maslov_p, psi2, err)
    c = min(1.0, max(-1.0, 0.5 * tr))
    base = math.acos(c)
    theta = base if M[0, 1] >= 0 else TWO_PI - base
    full = theta + TWO_PI * round((psi2 - theta) / TWO_PI)
    reduced = math.fmod(full, TWO_PI)
    return PoincareData(M, reduced, full, maslov_p, psi2, err)


def poincare_map(geodesic: ClosedGeodesic, steps: Optional[int] = None) -> PoincareData:
    """Linearized Poincare map of an equator.

    The curvature is evaluated along the curve as a function of arc length;
    on an equator it happens to be constant.
    """
    if abs(float(geodesic.surface.dr(geodesic.s_gamma))) > 1e-9:
        raise ValueError("poincare_map needs an equator (r'(s_gamma) = 0)")
    K0 = geodesic.curvature

    def curvature_along(sigma: float) -> float:
        return K0

    return integrate_jacobi(curvature_along, geodesic.period, steps)


def rotation_data(theta: float) -> PoincareData:
    """PoincareData of a pure rotation by ``theta`` (for classification tests)."""
    c, s = math.cos(theta), math.sin(theta)
    M = np.array([[c, s], [-s, c]])
    return PoincareData(M, math.fmod(theta, TWO_PI), theta, 0, theta, 0.0)


@dataclass(frozen=True)
class Ellipticity:
    kind: str
    q: Optional[int] = None
    distance: Optional[float] = None

    @property
    def is_generic(self) -> bool:
        return self.kind == "elliptic_generic"

    def __str__(self):
        return f"{self.kind}({self.q})" if self.q else self.kind


def is_elliptic_generic(p: PoincareData, max_denominator_Q: int = 50, tol: float = 1e-3) -> Ellipticity:
    """Classify a Poincare map.

    The unit-modulus eigenvalues ``exp(+-i theta)`` are flagged as a suspected
    ``q``-th root of unity when ``|q theta / 2pi - p| <= tol`` for some
    ``q <= max_denominator_Q``; the smallest such ``q`` is reported.
    """
    tr = p.trace
    if abs(tr) > 2.0 + tol:
        return Ellipticity("hyperbolic")
    if abs(tr) >= 2.0 - tol:
        return Ellipticity("parabolic")
    theta = p.winding_theta_full if p.winding_theta_full is not None else p.rotation_angle_theta
    x = math.fmod(theta / TWO_PI, 1.0)
    best = math.inf
    for q in range(1, max_denominator_Q + 1):
        d = abs(q * x - round(q * x))
        best = min(best, d)
        if d <= tol:
            return Ellipticity("root_of_unity_suspect", q, d)
    return Ellipticity("elliptic_generic", None, best)
