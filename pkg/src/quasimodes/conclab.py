"""Concentration experiments: interval schemes, masses, bad sets, random factors.

An interval scheme is a list of windows ``I_m = [lambda_m - l_m, lambda_m + l_m]``
that contain an eigenvalue of ``Delta_t`` for every ``t`` on the grid, plus a
sequence ``q_m``.  For each ``(m, t)`` every eigenpair in ``I_m`` is computed
and its mass ``integral f |phi|^2 dx_t`` recorded; the bad set
``Y(eps, m)`` is the fraction of grid ``t`` where some mass reaches
``eps * q_m``.

Two regimes:

* separable: ``f = f(s)``; masses are taken in the beam's own angular
  sector ``n = m`` and the window is the envelope of the sector ground
  branch, which moves monotonically from ``t = 0`` to ``t = 1``.
* coupled: ``f = f(s, phi)``; the window comes from the ``t = 0``
  rotationally symmetric mode used as a ``t``-uniform quasi-mode, and all
  eigenpairs of the 2D operator inside it are examined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .spectral import (SpectralWindow, assemble_coupled, assemble_sector, count_below,
                       eigs_in_window, fd_angular_symbol, sector_ground_state)
from .surface import (ConformalFactor, ConformalFamily, SurfaceOfRevolution, constant_factor,
                      flatness_profile)

DEFAULT_EPSILONS = (1.0, 0.3, 0.1)


class SchemeError(RuntimeError):
    pass


class ConeViolation(ValueError):
    pass


# -- interval schemes ---------------------------------------------------------

def q_sequence(ms: Sequence[int], rule: str = "inv_sqrt", masses=None) -> np.ndarray:
    """``inv_sqrt``: ``q_m = m^-1/2``; ``median_mass``: ``q_m = sqrt(median mass)``."""
    ms = np.asarray(ms, dtype=float)
    if rule == "inv_sqrt":
        return ms ** -0.5
    if rule == "median_mass":
        if masses is None:
            raise ValueError("median_mass rule needs per-m masses")
        return np.sqrt(np.asarray([np.median(x) for x in masses], dtype=float))
    raise ValueError(f"unknown q rule {rule!r}")


@dataclass
class IntervalScheme:
    m: np.ndarray
    center: np.ndarray
    half_width: np.ndarray
    q: np.ndarray
    provenance: list

    def window(self, i: int) -> SpectralWindow:
        return SpectralWindow(float(self.center[i]), float(self.half_width[i]))

    @property
    def sum_l(self) -> float:
        return float(np.sum(self.half_width))

    @property
    def sum_l_over_q(self) -> float:
        return float(np.sum(self.half_width / self.q))

    @property
    def tail_decreasing(self) -> bool:
        """``l_m / q_m`` strictly decreasing over the last half of the range."""
        ratio = self.half_width / self.q
        tail = ratio[len(ratio) // 2:]
        return bool(tail.size >= 2 and np.all(np.diff(tail) < 0))

    @property
    def q_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.q) < 0))

    def thinned(self, index: Sequence[int]) -> "IntervalScheme":
        """Sub-sequence ``m_k`` (e.g. to make ``sum l_{m_k}`` converge)."""
        idx = np.asarray(index, dtype=int)
        return IntervalScheme(self.m[idx], self.center[idx], self.half_width[idx], self.q[idx],
                              [self.provenance[i] for i in idx])


def build_interval_scheme(ms: Sequence[int], mode: str, *, centers=None, defects=None,
                          c: float = 1.1, branch_lo=None, branch_hi=None, pad: float = 1e-8,
                          half_width=None, q_rule: str = "inv_sqrt", masses=None) -> IntervalScheme:
    """Windows independent of ``t``.

    ``beam_defect``: ``l_m = c * C_m`` around the quasi-eigenvalue, with
    ``C_m`` the defect maximized over the sampled ``t``.  ``envelope``:
    ``[branch(0) - pad, branch(1) + pad]``, valid for all ``t`` because
    branches are nondecreasing.  ``fixed``: a prescribed ``l_m`` (control).
    """
    ms = np.asarray(ms, dtype=int)
    if mode == "beam_defect":
        if c < 1:
            raise ValueError("c must be >= 1")
        center = np.asarray(centers, dtype=float)
        l = c * np.asarray(defects, dtype=float)
        prov = [f"beam_defect(c={c})"] * ms.size
    elif mode == "envelope":
        lo = np.asarray(branch_lo, dtype=float) - pad
        hi = np.asarray(branch_hi, dtype=float) + pad
        if np.any(hi < lo):
            raise SchemeError("branch decreased between t=0 and t=1")
        center = 0.5 * (lo + hi)
        l = 0.5 * (hi - lo)
        prov = [f"envelope(pad={pad})"] * ms.size
    elif mode == "fixed":
        center = np.asarray(centers, dtype=float)
        l = np.broadcast_to(np.asarray(half_width, dtype=float), center.shape).copy()
        prov = ["fixed"] * ms.size
    else:
        raise ValueError(f"unknown scheme mode {mode!r}")
    if np.any(l <= 0):
        raise SchemeError("every half-width must be positive")
    q = q_sequence(ms, q_rule, masses)
    return IntervalScheme(ms, center, l, q, prov)


def verify_capture(scheme: IntervalScheme, operator_at: Callable, t_grid) -> list[tuple[int, float]]:
    """``(m, t)`` pairs whose window holds no eigenvalue of ``operator_at(m, t)``."""
    failures = []
    for i, m in enumerate(scheme.m):
        w = scheme.window(i)
        for t in t_grid:
            op = operator_at(int(m), float(t))
            if count_below(op, w.hi, w.center) - count_below(op, w.lo, w.center) < 1:
                failures.append((int(m), float(t)))
    return failures


# -- masses and bad sets ------------------------------------------------------

@dataclass
class ConcentrationReport:
    scheme: IntervalScheme
    t_grid: np.ndarray
    regime: str
    mu: list            # mu[i][k]: eigenvalues in I_m at t_k
    masses: list        # masses[i][k]
    count0: np.ndarray  # eigenvalues of the t=0 operator below lambda_m + l_m
    hypotheses_ok: bool
    hypothesis_note: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def sup_mass(self) -> np.ndarray:
        out = np.zeros((len(self.masses), self.t_grid.size))
        for i, row in enumerate(self.masses):
            for k, mm in enumerate(row):
                out[i, k] = np.max(mm) if len(mm) else 0.0
        return out

    @property
    def counts(self) -> np.ndarray:
        return np.array([[len(x) for x in row] for row in self.mu])

    def rows(self):
        """``(m, t, mu, mass)`` in ``(m, t, mu)``-sorted order."""
        for i, m in enumerate(self.scheme.m):
            for k, t in enumerate(self.t_grid):
                order = np.argsort(self.mu[i][k], kind="stable")
                for j in order:
                    yield int(m), float(t), float(self.mu[i][k][j]), float(self.masses[i][k][j])


def factor_in_cone(surface: SurfaceOfRevolution, factor: ConformalFactor, n_grid: int = 10_000):
    """``(ok, note)``: does ``f`` vanish to its order on gamma and dominate ``c d^N``?"""
    if factor.is_zero:
        return False, "f is identically zero"
    if factor.order is None:
        return False, "hypotheses violated (f not in cone)"
    if not factor.separable:
        phis = np.linspace(0.0, 2 * math.pi, 64, endpoint=False)
    else:
        phis = np.zeros(1)
    s = surface.grid(n_grid)
    d = surface.distance_to_parallel(s, factor.s_gamma)
    keep = d > 0
    dn = (d[keep] / (math.pi * surface.length_scale)) ** factor.order
    ratio = min(float(np.min(factor(s[keep], np.full(keep.sum(), p)) / dn)) for p in phis)
    if not ratio > 0:
        return False, "hypotheses violated (f not in cone)"
    return True, f"cone constant {ratio:.6g} (distance in units of pi*a)"


def _sector_sweep(family, scheme, t_grid, N_s, jobs):
    def one(i):
        m = int(scheme.m[i])
        w = scheme.window(i)
        mus, ms_ = [], []
        for t in t_grid:
            sol = eigs_in_window(assemble_sector(family, m, float(t), N_s), w)
            mus.append(sol.eigenvalues)
            ms_.append(sol.masses)
        c0 = count_below(assemble_sector(family, m, 0.0, N_s), w.hi, w.center)
        return mus, ms_, c0
    return _map(one, range(scheme.m.size), jobs)


def _coupled_sweep(family, scheme, t_grid, N_s, N_phi, jobs):
    out_mu = [[None] * t_grid.size for _ in scheme.m]
    out_mass = [[None] * t_grid.size for _ in scheme.m]
    for k, t in enumerate(t_grid):
        op = assemble_coupled(family, float(t), N_s, N_phi)

        def one(i):
            sol = eigs_in_window(op, scheme.window(i))
            return sol.eigenvalues, sol.masses
        for i, (mu, mass) in enumerate(_map(one, range(scheme.m.size), jobs)):
            out_mu[i][k] = mu
            out_mass[i][k] = mass
    op0 = assemble_coupled(family, 0.0, N_s, N_phi)
    c0 = [count_below(op0, scheme.window(i).hi, scheme.center[i]) for i in range(scheme.m.size)]
    return out_mu, out_mass, np.asarray(c0)


def _map(fn, items, jobs):
    items = list(items)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def measure_masses(scheme: IntervalScheme, family: ConformalFamily, t_grid, regime: str = "separable",
                   N_s: int = 512, N_phi: int = 96, jobs: int = 1) -> ConcentrationReport:
    """Masses of every eigenpair inside every window at every grid ``t``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if regime == "separable":
        res = _sector_sweep(family, scheme, t_grid, N_s, jobs)
        mu = [r[0] for r in res]
        masses = [r[1] for r in res]
        count0 = np.asarray([r[2] for r in res])
    elif regime == "coupled":
        mu, masses, count0 = _coupled_sweep(family, scheme, t_grid, N_s, N_phi, jobs)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    ok, note = factor_in_cone(family.base, family.factor)
    return ConcentrationReport(scheme, t_grid, regime, mu, masses, count0, ok, note,
                               meta=dict(N_s=N_s, N_phi=N_phi if regime == "coupled" else None))


@dataclass
class BadSetAudit:
    m: np.ndarray
    epsilons: np.ndarray
    measured: np.ndarray       # (M, E)
    bound: np.ndarray          # (M, E)
    verdicts: list             # [[str]]
    K: float
    K_fit: float
    K_min: float
    good_set_estimate: dict
    monotone_in_eps: bool
    indicators: np.ndarray     # (M, E, T) booleans
    weyl_ok: bool

    @property
    def all_pass(self) -> bool:
        return all(v == "pass" for row in self.verdicts for v in row)

    def rows(self):
        for i, m in enumerate(self.m):
            for e, eps in enumerate(self.epsilons):
                yield int(m), float(eps), float(self.measured[i, e]), float(self.bound[i, e]), self.verdicts[i][e]


def weyl_constant(report: ConcentrationReport) -> float:
    """``max_m 2 N_m / (lambda_m - l_m)`` with ``N_m`` the ``t = 0`` count below ``lambda_m + l_m``.

    Each branch that can enter ``I_m`` starts below its top (monotonicity),
    and while its mass is at least ``eps q_m`` it climbs at rate at least
    ``(lambda_m - l_m) eps q_m``, so ``|Y| <= K l_m / (eps q_m)``.
    """
    sch = report.scheme
    lo = sch.center - sch.half_width
    return float(np.max(2.0 * report.count0 / lo))


def bad_set_audit(report: ConcentrationReport, epsilon_list: Sequence[float] = DEFAULT_EPSILONS,
                  m0: Optional[int] = None) -> BadSetAudit:
    """Measured ``|Y_eps^m|`` against ``K l_m / (eps q_m)`` with ``K`` from :func:`weyl_constant`.

    ``K_fit`` (least squares through the origin) and ``K_min`` (smallest
    constant that covers every cell) are reported for comparison only.
    """
    sch = report.scheme
    eps = np.asarray(epsilon_list, dtype=float)
    sup = report.sup_mass                                   # (M, T)
    thresh = eps[None, :, None] * sch.q[:, None, None]      # (M, E, 1)
    ind = sup[:, None, :] >= thresh                         # (M, E, T)
    measured = ind.mean(axis=2)
    x = sch.half_width[:, None] / (eps[None, :] * sch.q[:, None])
    K = weyl_constant(report)
    bound = K * x
    K_fit = float(np.sum(x * measured) / np.sum(x * x))
    K_min = float(np.max(measured / x))
    verdicts = []
    for i in range(sch.m.size):
        row = []
        for e in range(eps.size):
            if not report.hypotheses_ok:
                row.append(f"fail: {report.hypothesis_note}")
            else:
                row.append("pass" if measured[i, e] <= bound[i, e] else "fail")
        verdicts.append(row)
    order = np.argsort(eps)
    mono = True
    for a, b in zip(order[:-1], order[1:]):        # eps_a < eps_b  =>  Y_b subset of Y_a
        mono &= bool(np.all(~ind[:, b, :] | ind[:, a, :]))
    m0 = int(np.median(sch.m)) if m0 is None else m0
    sel = sch.m >= m0
    good = {float(e): float(1.0 - np.mean(np.any(ind[sel, k, :], axis=0)))
            for k, e in enumerate(eps)}
    weyl_ok = bool(np.all(report.counts <= report.count0[:, None]))
    return BadSetAudit(sch.m, eps, measured, bound, verdicts, K, K_fit, K_min, good, mono, ind, weyl_ok)


# -- experiment drivers -------------------------------------------------------

def separable_experiment(family: ConformalFamily, ms: Sequence[int], N_s: int = 512,
                         q_rule: str = "inv_sqrt", pad: float = 1e-8, jobs: int = 1,
                         t_grid=None):
    """Envelope scheme on the sector ground branches, then masses on the grid."""
    t_grid = np.asarray(family.t_grid if t_grid is None else t_grid, dtype=float)
    lo = [sector_ground_state(assemble_sector(family, m, 0.0, N_s))[0] for m in ms]
    hi = [sector_ground_state(assemble_sector(family, m, 1.0, N_s))[0] for m in ms]
    scheme = build_interval_scheme(ms, "envelope", branch_lo=lo, branch_hi=hi, pad=pad,
                                   q_rule="inv_sqrt" if q_rule == "median_mass" else q_rule)
    report = measure_masses(scheme, family, t_grid, "separable", N_s=N_s, jobs=jobs)
    if q_rule == "median_mass":
        scheme.q = q_sequence(ms, "median_mass", report.sup_mass)
    report.meta["branch_lo"] = np.asarray(lo)
    report.meta["branch_hi"] = np.asarray(hi)
    return scheme, report


def symmetric_quasimode(family: ConformalFamily, m: int, N_s: int, N_phi: int):
    """``t = 0`` eigenpair of the coupled grid operator in angular mode ``m``.

    Returns ``(lambda, U)`` with ``U`` holding the cos and sin versions as
    ``dx_0``-normalized columns on the ``(s, phi)`` grid.
    """
    base = ConformalFamily(family.base, constant_factor(0.0))
    op = assemble_sector(base, m, 0.0, N_s, angular_symbol=fd_angular_symbol(m, N_phi))
    lam, u = sector_ground_state(op)
    phi = np.arange(N_phi) * (2 * math.pi / N_phi)
    U = np.stack([np.outer(u, np.cos(m * phi)).ravel(),
                  np.outer(u, np.sin(m * phi)).ravel()], axis=1) / math.sqrt(math.pi)
    return lam, U


def quasimode_defect(op, lam: float, U: np.ndarray) -> float:
    """Largest ``||(Delta_t - lam) u||_t / ||u||_t`` over the columns of ``U``."""
    w = op.weight
    R = (op.stiffness @ U) / w[:, None] - lam * U
    num = np.sqrt(np.sum(w[:, None] * R * R, axis=0))
    den = np.sqrt(np.sum(w[:, None] * U * U, axis=0))
    return float(np.max(num / den))


def coupled_experiment(family: ConformalFamily, ms: Sequence[int], N_s: int = 192, N_phi: int = 96,
                       c: float = 1.1, q_rule: str = "inv_sqrt", jobs: int = 1, t_grid=None):
    """Defect-based scheme from the symmetric ``t = 0`` modes, masses on the coupled operator."""
    t_grid = np.asarray(family.t_grid if t_grid is None else t_grid, dtype=float)
    modes = [symmetric_quasimode(family, m, N_s, N_phi) for m in ms]
    defects = np.zeros(len(ms))
    for t in t_grid:
        op = assemble_coupled(family, float(t), N_s, N_phi)
        for i, (lam, U) in enumerate(modes):
            defects[i] = max(defects[i], quasimode_defect(op, lam, U))
    centers = [lam for lam, _ in modes]
    # at t = 0 the defect vanishes to roundoff; keep windows strictly positive
    defects = np.maximum(defects, 1e-12 * np.asarray(centers))
    scheme = build_interval_scheme(ms, "beam_defect", centers=centers, defects=defects, c=c,
                                   q_rule="inv_sqrt" if q_rule == "median_mass" else q_rule)
    report = measure_masses(scheme, family, t_grid, "coupled", N_s=N_s, N_phi=N_phi, jobs=jobs)
    if q_rule == "median_mass":
        scheme.q = q_sequence(ms, "median_mass", report.sup_mass)
    report.meta["defects"] = defects
    return scheme, report


# -- cube-measure sampler -----------------------------------------------------

@dataclass(frozen=True)
class CubeMeasureSpec:
    """Law of ``anchor * d_N + sum_i t_i e_i`` with ``t_i`` uniform on ``[0, 1]``.

    ``e_i = 2^-i d_N (1 + trig_i) / 2`` where ``d_N`` is the order-``N``
    flatness profile and ``trig_i`` runs through ``cos(s'), sin(s'),
    cos(2 s'), ...`` with ``s' = (s - s_gamma) / a``.  The anchor is the
    base point of the affine line family; it keeps every draw strictly
    inside the cone.
    """

    surface: SurfaceOfRevolution
    N: int = 8
    n_basis: int = 20
    anchor: Optional[float] = None
    s_gamma: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return 2.0 ** -np.arange(1, self.n_basis + 1)

    @property
    def anchor_weight(self) -> float:
        return 0.5 * self.weights[0] if self.anchor is None else float(self.anchor)

    @property
    def cone_constant(self) -> float:
        """``c = w_1 / 4`` in the normalized distance ``d / (pi a)``."""
        return 0.25 * self.weights[0]

    def basis(self, i: int, s) -> np.ndarray:
        """``e_i`` for ``i = 1 .. n_basis``."""
        a = self.surface.length_scale
        x = (np.asarray(s, dtype=float) - self.s_gamma) / a
        freq = (i + 1) // 2
        trig = np.cos(freq * x) if i % 2 else np.sin(freq * x)
        return self.weights[i - 1] * flatness_profile(self.surface, s, self.N, self.s_gamma) * 0.5 * (1 + trig)

    def norms(self, n_grid: int = 10_000) -> np.ndarray:
        s = self.surface.grid(n_grid)
        return np.array([np.max(np.abs(self.basis(i, s))) for i in range(1, self.n_basis + 1)])

    def tail_fraction(self) -> float:
        """``sum_{i > I} ||e_i|| / sum_i ||e_i||`` using ``||e_i|| <= 2^-i``."""
        w = self.weights
        tail = 2.0 ** -self.n_basis
        return float(tail / (np.sum(w) + tail))


def factor_from_coefficients(spec: CubeMeasureSpec, coeffs: Sequence[float],
                             label: str = "sampled") -> ConformalFactor:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (spec.n_basis,):
        raise ValueError(f"expected {spec.n_basis} coefficients")
    if np.any((coeffs < 0) | (coeffs > 1)):
        raise ValueError("cube coordinates must lie in [0, 1]")
    anchor = spec.anchor_weight
    if anchor == 0.0 and not np.any(coeffs > 0):
        raise ConeViolation("zero conformal factor: the theorem needs f != 0")

    def f(s):
        out = anchor * flatness_profile(spec.surface, s, spec.N, spec.s_gamma)
        for i, ti in enumerate(coeffs, start=1):
            if ti:
                out = out + ti * spec.basis(i, s)
        return out

    s = spec.surface.grid(4096)
    fmax = float(np.max(f(s)))
    return ConformalFactor(f, True, label, order=spec.N, s_gamma=spec.s_gamma, max_value=fmax,
                           meta={"kind": "sampled", "coefficients": coeffs.tolist(),
                                 "anchor": anchor})


def cone_certificate(spec: CubeMeasureSpec, factor: ConformalFactor, n_grid: int = 10_000) -> dict:
    """Check ``f >= c (d / (pi a))^N`` on a grid, ``d`` the distance to gamma."""
    surf = spec.surface
    s = surf.grid(n_grid)
    d = surf.distance_to_parallel(s, spec.s_gamma)
    dn = (d / (math.pi * surf.length_scale)) ** spec.N
    f = factor(s)
    c = spec.cone_constant
    ok = bool(np.all(f >= c * dn) and np.all(f >= 0))
    keep = d > 0
    return {"ok": ok, "c": c, "c_absolute": c / (math.pi * surf.length_scale) ** spec.N,
            "min_ratio": float(np.min(f[keep] / dn[keep])), "N": spec.N, "n_grid": n_grid}


def sample_conformal_factor(spec: CubeMeasureSpec, seed: int) -> ConformalFactor:
    rng = np.random.default_rng(seed)
    coeffs = rng.random(spec.n_basis)
    factor = factor_from_coefficients(spec, coeffs, label=f"sampled(seed={seed})")
    cert = cone_certificate(spec, factor)
    if not cert["ok"]:
        raise ConeViolation(f"sample {seed} left the cone (min ratio {cert['min_ratio']:.3g})")
    return factor
