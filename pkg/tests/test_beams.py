from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from quasimodes.beams import (BeamError, build_beam, check_spectrum_capture, decay_exponent,
                              harmonic_width, loglog_slope, measure_defect, quasi_eigenvalue, rms_width)
from quasimodes.geodesic import find_equators, outer_equator, poincare_map
from quasimodes.spectral import assemble_sector, sector_ground_state


@pytest.fixture(scope="module")
def equator(torus):
    return outer_equator(torus)


def test_width_formula(equator):
    assert harmonic_width(equator, 12) ** 2 == pytest.approx(3 * math.sqrt(3) / 12)


def test_quasi_eigenvalue_closed_form(equator):
    pm = poincare_map(equator)
    alpha, lam = quasi_eigenvalue(equator, pm, 20, 0)
    assert alpha == pytest.approx(math.pi * math.sqrt(3))
    assert lam == pytest.approx(((2 * math.pi * 20 + math.pi * math.sqrt(3)) / (6 * math.pi)) ** 2)
    alpha1, _ = quasi_eigenvalue(equator, pm, 20, 1, maslov_p=1)
    assert alpha1 == pytest.approx(3 * math.pi * math.sqrt(3) + math.pi)


def test_beam_is_normalized_and_centered(equator, torus):
    beam = build_beam(equator, 30)
    h = torus.L_s / beam.s.size
    assert np.sum(torus.r(beam.s) * beam.profile ** 2) * h == pytest.approx(1.0)
    w = torus.r(beam.s) * h
    assert rms_width(beam.offset, beam.profile, w) == pytest.approx(beam.sigma / math.sqrt(2), rel=2e-2)


def test_transverse_excitation_is_orthogonal(equator, torus):
    b0, b1 = build_beam(equator, 30, 0), build_beam(equator, 30, 1)
    h = torus.L_s / b0.s.size
    # r is even about the equator, H_1 is odd
    assert abs(np.sum(torus.r(b0.s) * b0.profile * b1.profile) * h) < 1e-12


def test_beam_rejects_bad_input(torus, equator):
    inner = find_equators(torus)[1]
    with pytest.raises(BeamError):
        build_beam(inner, 10)
    with pytest.raises(BeamError):
        build_beam(equator, 0)
    with pytest.raises(BeamError):
        build_beam(equator, 10, -1)


def test_under_resolved_beam_refused(equator, flat_family):
    beam = build_beam(equator, 80, N_s=64)
    with pytest.raises(BeamError):
        measure_defect(beam, flat_family, 0.0)


def _gaussian_tail(torus, sigma, d):
    def dens(x):
        return torus.r(x) * math.exp(-(x / sigma) ** 2)
    total = quad(dens, -math.pi, math.pi, limit=200)[0]
    inner = quad(dens, -d, d, limit=200)[0]
    return (total - inner) / total


@pytest.mark.parametrize("m", [10, 40, 65, 80])
def test_localization_mass_matches_gaussian_tail(equator, flat_family, torus, m):
    beam = build_beam(equator, m)
    rep = measure_defect(beam, flat_family, 0.0)
    for d, mass in zip(rep.deltas, rep.localization_mass):
        assert mass == pytest.approx(_gaussian_tail(torus, beam.sigma, d), rel=0.03, abs=1e-9)


def test_localization_bound_holds_from_m_65(equator, flat_family):
    masses = {m: measure_defect(build_beam(equator, m), flat_family, 0.0).localization_mass[-1]
              for m in (40, 65, 80)}
    assert masses[65] <= 1e-4 and masses[80] <= 1e-4
    assert masses[40] > 1e-4        # the bound is not yet reached at m = 40


def test_defect_is_order_one(equator, flat_family):
    ms = [10, 20, 40, 80]
    reps = [measure_defect(build_beam(equator, m), flat_family, 0.0) for m in ms]
    C = np.array([r.C_m for r in reps])
    lam = np.array([r.lambda_m for r in reps])
    assert np.all((C > 0.2) & (C < 0.5))
    assert loglog_slope(lam, C / lam) == pytest.approx(-1.0, abs=0.1)


def test_quasi_eigenvalue_tracks_sector_ground_state(equator, flat_family):
    gaps = []
    for m in (10, 30, 60):
        lam = build_beam(equator, m).lambda_m
        nu = sector_ground_state(assemble_sector(flat_family, m, 0.0, 1024))[0]
        gaps.append(lam - nu)
    assert max(gaps) <= 5 * np.median(gaps)
    assert all(0 < g < 0.2 for g in gaps)


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_window_captures_an_eigenvalue(equator, flat_family, t):
    res = check_spectrum_capture(build_beam(equator, 20), flat_family, t)
    assert res.captured and res.distance <= res.C_m


def test_decay_exponent_of_exact_gaussian():
    x = np.linspace(-2, 2, 801)
    sigma = 0.4
    assert decay_exponent(x, np.exp(-0.5 * (x / sigma) ** 2), 1.0) == pytest.approx(1 / sigma ** 2, rel=1e-8)


def test_loglog_slope_of_power_law():
    x = np.array([1.0, 2.0, 5.0, 9.0])
    assert loglog_slope(x, 3 * x ** -0.25) == pytest.approx(-0.25)


def test_surface_mismatch(equator):
    from quasimodes.surface import ConformalFamily, SurfaceOfRevolution, constant_factor
    other = ConformalFamily(SurfaceOfRevolution.torus(3.0, 1.0), constant_factor(0.0))
    with pytest.raises(BeamError):
        measure_defect(build_beam(equator, 10), other, 0.0)
