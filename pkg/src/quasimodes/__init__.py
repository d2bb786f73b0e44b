"""Gaussian-beam quasi-modes, conformal eigenvalue flows and concentration on surfaces of revolution."""
from __future__ import annotations

__version__ = "0.1.0"

from .surface import (ConformalFactor, ConformalFamily, SurfaceOfRevolution, constant_factor,
                      make_coupled_factor, make_flat_factor)
from .geodesic import ClosedGeodesic, find_equators, is_elliptic_generic, outer_equator, poincare_map
from .spectral import (SpectralWindow, assemble_coupled, assemble_sector, eigs_in_window,
                       global_spectrum)

__all__ = [
    "ClosedGeodesic", "ConformalFactor", "ConformalFamily", "SpectralWindow", "SurfaceOfRevolution",
    "assemble_coupled", "assemble_sector", "constant_factor", "eigs_in_window", "find_equators",
    "global_spectrum", "is_elliptic_generic", "make_coupled_factor", "make_flat_factor",
    "outer_equator", "poincare_map",
]
