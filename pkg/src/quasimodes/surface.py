"""Closed surfaces of revolution and their conformal deformations.

A surface is described by an arc-length profile ``r(s)`` (distance to the
rotation axis), periodic in ``s`` with period ``L_s``.  The metric is
``ds^2 + r(s)^2 dphi^2`` with ``phi`` in ``[0, 2*pi)``, so every surface here
is a torus.  The conformal family ``g_t = exp(-t f) g_0`` has area element
``r exp(-t f) ds dphi`` and Laplacian ``exp(t f) Delta_0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class SurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class SurfaceOfRevolution:
    """Arc-length profile of a torus of revolution.

    Use the constructors :meth:`torus`, :meth:`flat` and :meth:`fourier`.
    ``params`` holds ``(R, a)`` for a torus, ``(rho, L)`` for a flat torus and
    the cosine coefficients of ``r`` for a Fourier profile.
    """

    kind: str
    params: tuple
    L_s: float

    @classmethod
    def torus(cls, R: float = 2.0, a: float = 1.0) -> "SurfaceOfRevolution":
        if not R > a > 0:
            raise SurfaceError(f"torus of revolution needs R > a > 0, got R={R}, a={a}")
        return cls("torus", (float(R), float(a)), TWO_PI * a)

    @classmethod
    def flat(cls, rho: float = 1.0, L: float = TWO_PI) -> "SurfaceOfRevolution":
        if rho <= 0 or L <= 0:
            raise SurfaceError("flat torus needs rho > 0 and L > 0")
        return cls("flat", (float(rho), float(L)), float(L))

    @classmethod
    def fourier(cls, coefficients: Sequence[float], L_s: float) -> "SurfaceOfRevolution":
        """``r(s) = sum_k c_k cos(2 pi k s / L_s)``; validity is checked on a dense grid."""
        coeffs = tuple(float(c) for c in coefficients)
        if not coeffs:
            raise SurfaceError("empty Fourier profile")
        surf = cls("fourier", coeffs, float(L_s))
        s = np.linspace(0.0, L_s, 10_000, endpoint=False)
        if np.min(surf.r(s)) <= 0:
            raise SurfaceError("profile touches the rotation axis (r <= 0)")
        if np.max(surf.dr(s) ** 2) > 1.0 + 1e-12:
            raise SurfaceError("profile is not an arc-length parametrization (r'^2 > 1)")
        return surf

    # -- profile and derivatives -------------------------------------------
    @property
    def length_scale(self) -> float:
        """``a`` for a torus of revolution, ``L_s / 2 pi`` otherwise."""
        if self.kind == "torus":
            return self.params[1]
        return self.L_s / TWO_PI

    def _fourier_terms(self, s, order: int):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        w = TWO_PI / self.L_s
        for k, c in enumerate(self.params):
            if c == 0.0:
                continue
            phase = k * w * s
            scale = (k * w) ** order
            if order % 4 == 0:
                out = out + c * scale * np.cos(phase)
            elif order % 4 == 1:
                out = out - c * scale * np.sin(phase)
            elif order % 4 == 2:
                out = out - c * scale * np.cos(phase)
            else:
                out = out + c * scale * np.sin(phase)
        return out

    def r(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "torus":
            R, a = self.params
            return R + a * np.cos(s / a)
        if self.kind == "flat":
            return np.full_like(s, self.params[0])
        return self._fourier_terms(s, 0)

    def dr(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "torus":
            R, a = self.params
            return -np.sin(s / a)
        if self.kind == "flat":
            return np.zeros_like(s)
        return self._fourier_terms(s, 1)

    def d2r(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "torus":
            R, a = self.params
            return -np.cos(s / a) / a
        if self.kind == "flat":
            return np.zeros_like(s)
        return self._fourier_terms(s, 2)

    def grid(self, n: int) -> np.ndarray:
        return np.arange(n) * (self.L_s / n)

    @property
    def r_max(self) -> float:
        if self.kind == "torus":
            return sum(self.params)
        if self.kind == "flat":
            return self.params[0]
        return float(np.max(self.r(self.grid(10_000))))

    @property
    def r_min(self) -> float:
        if self.kind == "torus":
            return self.params[0] - self.params[1]
        if self.kind == "flat":
            return self.params[0]
        return float(np.min(self.r(self.grid(10_000))))

    def distance_to_parallel(self, s, s_gamma: float):
        """Meridian distance from ``s`` to the parallel ``s = s_gamma``."""
        d = np.mod(np.asarray(s, dtype=float) - s_gamma, self.L_s)
        return np.minimum(d, self.L_s - d)

    def signed_offset(self, s, s_gamma: float):
        """Offset ``s - s_gamma`` wrapped into ``[-L_s/2, L_s/2)``."""
        half = 0.5 * self.L_s
        return np.mod(np.asarray(s, dtype=float) - s_gamma + half, self.L_s) - half


def gauss_curvature(surface: SurfaceOfRevolution, s):
    """``K = -r''/r`` for an arc-length profile."""
    return -surface.d2r(s) / surface.r(s)


def total_curvature(surface: SurfaceOfRevolution, n: int = 4096) -> float:
    """``(2 pi)^-1 * integral of K dA``; zero for every torus."""
    s = surface.grid(n)
    h = surface.L_s / n
    return float(np.sum(gauss_curvature(surface, s) * surface.r(s)) * h)


@dataclass(frozen=True)
class ConformalFactor:
    """A nonnegative function ``f`` defining ``g_t = exp(-t f) g_0``.

    ``func`` takes ``s`` (and ``phi`` when ``separable`` is False) and must
    broadcast over numpy arrays.  ``order`` is the vanishing order at the
    parallel ``s_gamma``; ``None`` means ``f`` does not vanish there.
    """

    func: Callable
    separable: bool
    label: str
    order: Optional[int] = None
    s_gamma: float = 0.0
    max_value: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, s, phi=None):
        s = np.asarray(s, dtype=float)
        if self.separable:
            out = self.func(s)
            if phi is not None:
                out = np.broadcast_to(out, np.broadcast(s, np.asarray(phi)).shape)
            return np.asarray(out, dtype=float)
        if phi is None:
            raise ValueError(f"factor {self.label!r} depends on phi")
        return np.asarray(self.func(s, np.asarray(phi, dtype=float)), dtype=float)

    @property
    def is_zero(self) -> bool:
        return self.max_value == 0.0


def flatness_profile(surface: SurfaceOfRevolution, s, N: int, s_gamma: float = 0.0):
    """``((1 - cos((s - s_gamma)/a)) / 2)^(N/2)``, smooth and of order ``N`` at ``s_gamma``."""
    a = surface.length_scale
    base = 0.5 * (1.0 - np.cos((np.asarray(s, dtype=float) - s_gamma) / a))
    return base ** (N // 2)


def make_flat_factor(surface: SurfaceOfRevolution, N: int = 8, amplitude: float = 1.0,
                     s_gamma: float = 0.0) -> ConformalFactor:
    if N < 2 or N % 2:
        raise ValueError(f"vanishing order must be even and >= 2, got {N}")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")

    def f(s):
        return amplitude * flatness_profile(surface, s, N, s_gamma)

    return ConformalFactor(f, True, f"flat(N={N}, A={amplitude})", order=N,
                           s_gamma=s_gamma, max_value=float(amplitude),
                           meta={"kind": "flat", "N": N, "amplitude": amplitude})


def make_coupled_factor(surface: SurfaceOfRevolution, N: int = 8, amplitude: float = 1.0,
                        coupling: float = 0.3, s_gamma: float = 0.0) -> ConformalFactor:
    """``flat(s) * (1 + coupling * cos(phi))``: breaks the rotational symmetry."""
    if not 0 <= coupling < 1:
        raise ValueError("coupling must lie in [0, 1) to keep f >= 0 and positive off gamma")
    flat = make_flat_factor(surface, N, amplitude, s_gamma)

    def f(s, phi):
        return flat.func(s) * (1.0 + coupling * np.cos(phi))

    return ConformalFactor(f, False, f"coupled(N={N}, A={amplitude}, k={coupling})",
                           order=N, s_gamma=s_gamma,
                           max_value=float(amplitude * (1.0 + coupling)),
                           meta={"kind": "coupled", "N": N, "amplitude": amplitude,
                                 "coupling": coupling})


def constant_factor(c: float) -> ConformalFactor:
    if c < 0:
        raise ValueError("conformal factor must be nonnegative")
    return ConformalFactor(lambda s: np.full_like(np.asarray(s, dtype=float), c), True,
                           f"constant({c})", order=None, max_value=float(c),
                           meta={"kind": "constant", "value": c})


def tabulated_factor(surface: SurfaceOfRevolution, s_nodes, values, *, order: Optional[int],
                     s_gamma: float, label: str) -> ConformalFactor:
    """Periodic linear interpolation of sampled values (used for sampled metrics)."""
    s_nodes = np.asarray(s_nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    L = surface.L_s

    def f(s):
        return np.interp(np.mod(s, L), s_nodes, values, period=L)

    return ConformalFactor(f, True, label, order=order, s_gamma=s_gamma,
                           max_value=float(values.max()))


@dataclass(frozen=True)
class ConformalFamily:
    base: SurfaceOfRevolution
    factor: ConformalFactor
    t_grid: tuple = (0.0, 1.0)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("t_grid needs at least the endpoints 0 and 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be strictly increasing")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("t_grid must start at 0 and end at 1")
        object.__setattr__(self, "t_grid", tuple(float(x) for x in t))

    @classmethod
    def uniform(cls, base, factor, n_t: int = 101) -> "ConformalFamily":
        return cls(base, factor, tuple(np.linspace(0.0, 1.0, n_t)))

    @property
    def separable(self) -> bool:
        return self.factor.separable

    def area_element(self, t: float, s, phi=None):
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t={t} outside [0, 1]")
        return self.base.r(s) * np.exp(-t * self.factor(s, phi))

    def total_area(self, t: float, n_s: int = 2048, n_phi: int = 256) -> float:
        s = self.base.grid(n_s)
        h = self.base.L_s / n_s
        if self.factor.separable:
            return float(TWO_PI * h * np.sum(self.area_element(t, s)))
        phi = np.arange(n_phi) * (TWO_PI / n_phi)
        S, P = np.meshgrid(s, phi, indexing="ij")
        return float(h * (TWO_PI / n_phi) * np.sum(self.area_element(t, S, P)))
