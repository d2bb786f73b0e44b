"""Lowest-order Gaussian beams on a stable equator.

A beam of longitudinal index ``m`` and transverse index ``m1`` is the
function ``exp(i m phi) H_m1(x / sigma) exp(-x^2 / 2 sigma^2)`` with ``x``
the signed meridian offset from the equator.  ``sigma`` comes from the
harmonic approximation of the effective potential ``m^2 / r(s)^2``; the
predicted quasi-eigenvalue is ``((2 pi m + alpha) / T)^2`` with
``alpha = (m1 + 1/2) * winding + p * pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import hermite

from .geodesic import ClosedGeodesic, PoincareData, is_elliptic_generic, poincare_map
from .spectral import (SpectralWindow, assemble_sector, eigs_in_window, nearest_eigenvalue,
                       EigenSolution)
from .surface import ConformalFamily

DEFAULT_DELTAS = (0.1, 0.2, 0.4, 0.8)


class BeamError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianBeam:
    m: int
    m1: int
    alpha: float
    lambda_m: float
    sigma: float
    s: np.ndarray
    profile: np.ndarray
    geodesic: ClosedGeodesic
    maslov_p: int = 0

    @property
    def offset(self) -> np.ndarray:
        return self.geodesic.surface.signed_offset(self.s, self.geodesic.s_gamma)


def harmonic_width(geodesic: ClosedGeodesic, m: int) -> float:
    """``sigma`` with ``sigma^2 = r0 / (m sqrt(K))``, from ``m^2/r^2 ~ m^2/r0^2 (1 + K x^2)``."""
    K = geodesic.curvature
    if K <= 0:
        raise BeamError("harmonic width needs positive curvature on the geodesic")
    return math.sqrt(geodesic.radius / (m * math.sqrt(K)))


def quasi_eigenvalue(geodesic: ClosedGeodesic, poincare: PoincareData, m: int, m1: int = 0,
                     maslov_p: int = 0) -> tuple[float, float]:
    """``(alpha, lambda_m)`` using the unreduced winding angle."""
    alpha = (m1 + 0.5) * poincare.winding_theta_full + maslov_p * math.pi
    lam = ((2.0 * math.pi * m + alpha) / geodesic.period) ** 2
    return alpha, lam


def build_beam(geodesic: ClosedGeodesic, m: int, m1: int = 0, N_s: int = 1024,
               poincare: Optional[PoincareData] = None, maslov_p: int = 0) -> GaussianBeam:
    if m < 1:
        raise BeamError("longitudinal index m must be >= 1")
    if m1 < 0:
        raise BeamError("transverse index m1 must be >= 0")
    poincare = poincare or poincare_map(geodesic)
    kind = is_elliptic_generic(poincare)
    if not kind.is_generic:
        raise BeamError(f"geodesic is {kind}, beams need an elliptic generic one")
    alpha, lam = quasi_eigenvalue(geodesic, poincare, m, m1, maslov_p)
    sigma = harmonic_width(geodesic, m)
    surf = geodesic.surface
    s = surf.grid(N_s)
    x = surf.signed_offset(s, geodesic.s_gamma)
    coef = np.zeros(m1 + 1)
    coef[m1] = 1.0
    u = hermite.hermval(x / sigma, coef) * np.exp(-0.5 * (x / sigma) ** 2)
    h = surf.L_s / N_s
    u = u / math.sqrt(np.sum(surf.r(s) * u * u) * h)
    return GaussianBeam(m, m1, alpha, lam, sigma, s, u, geodesic, maslov_p)


@dataclass(frozen=True)
class DefectReport:
    m: int
    t: float
    lambda_m: float
    C_m: float
    deltas: tuple
    localization_mass: tuple

    @property
    def relative_defect(self) -> float:
        return self.C_m / self.lambda_m


def _check_surface(beam: GaussianBeam, family: ConformalFamily):
    if family.base != beam.geodesic.surface:
        raise BeamError("beam and family live on different surfaces")


def measure_defect(beam: GaussianBeam, family: ConformalFamily, t: float,
                   deltas: Sequence[float] = DEFAULT_DELTAS) -> DefectReport:
    """Relative defect ``||(Delta_t - lambda_m) u|| / ||u||`` in ``L^2(dx_t)``.

    ``deltas`` are tube radii in units of the profile length scale ``a``.
    """
    _check_surface(beam, family)
    if not 0.0 <= t <= 1.0:
        raise ValueError("t outside [0, 1]")
    N_s = beam.s.size
    h = family.base.L_s / N_s
    if beam.sigma <= 8 * h:
        raise BeamError(f"under-resolved: sigma={beam.sigma:.4g} <= 8 grid spacings ({8 * h:.4g})")
    op = assemble_sector(family, beam.m, t, N_s)
    u = beam.profile
    w = op.weight
    res = (op.stiffness @ u) / w - beam.lambda_m * u
    norm_u = math.sqrt(np.sum(w * u * u))
    C = math.sqrt(np.sum(w * res * res)) / norm_u
    dist = np.abs(beam.offset)
    a = family.base.length_scale
    loc = tuple(float(np.sum((w * u * u)[dist > d * a]) / norm_u ** 2) for d in deltas)
    return DefectReport(beam.m, float(t), beam.lambda_m, C, tuple(deltas), loc)


@dataclass(frozen=True)
class CaptureResult:
    window: SpectralWindow
    captured: bool
    count: int
    distance: float
    C_m: float
    solution: EigenSolution


def check_spectrum_capture(beam: GaussianBeam, family: ConformalFamily, t: float,
                           c_safety: float = 1.1) -> CaptureResult:
    """Window ``[lambda_m - c C_m, lambda_m + c C_m]`` and whether it holds an eigenvalue.

    The search runs on the beam's own angular sector, whose spectrum is part
    of the spectrum of ``Delta_t``; ``distance`` is the distance from
    ``lambda_m`` to that sector spectrum.
    """
    if c_safety < 1:
        raise ValueError("c_safety must be >= 1")
    rep = measure_defect(beam, family, t)
    window = SpectralWindow(beam.lambda_m, c_safety * rep.C_m)
    op = assemble_sector(family, beam.m, t, beam.s.size)
    sol = eigs_in_window(op, window)
    dist = abs(nearest_eigenvalue(op, beam.lambda_m) - beam.lambda_m)
    return CaptureResult(window, len(sol) > 0, len(sol), dist, rep.C_m, sol)


def rms_width(s_offset: np.ndarray, profile: np.ndarray, weight: np.ndarray) -> float:
    """Root-mean-square offset of ``|u|^2`` (``sigma / sqrt(2)`` for a Gaussian)."""
    p = weight * profile ** 2
    return float(np.sqrt(np.sum(p * s_offset ** 2) / np.sum(p)))


def loglog_slope(x, y) -> float:
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def decay_exponent(offset: np.ndarray, profile: np.ndarray, window: float,
                   floor: float = 1e-12) -> float:
    """Fit ``log |u|^2 ~ c0 - c d^2`` over ``|d| <= window``; returns ``c``.

    A positive ``c`` that grows like ``sqrt(lambda)`` is the usual beam
    scaling; ``c ~ 1/sqrt(lambda)`` would be the weaker form.
    """
    p = profile ** 2
    keep = (np.abs(offset) <= window) & (p > floor * p.max())
    slope = np.polyfit(offset[keep] ** 2, np.log(p[keep]), 1)[0]
    return float(-slope)
