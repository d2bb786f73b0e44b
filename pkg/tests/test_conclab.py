from __future__ import annotations

import numpy as np
import pytest

from quasimodes.conclab import (ConcentrationReport, ConeViolation, CubeMeasureSpec, SchemeError,
                                bad_set_audit, build_interval_scheme, cone_certificate,
                                factor_from_coefficients, factor_in_cone, q_sequence,
                                quasimode_defect, sample_conformal_factor, separable_experiment,
                                symmetric_quasimode, verify_capture)
from quasimodes.spectral import assemble_coupled, assemble_sector, sector_ground_state
from quasimodes.surface import ConformalFamily, constant_factor, make_coupled_factor, make_flat_factor

from conftest import COUPLED_MS


@pytest.fixture(scope="module")
def separable_run(torus):
    fam = ConformalFamily.uniform(torus, make_flat_factor(torus, 8), 21)
    return fam, *separable_experiment(fam, [10, 20, 30], N_s=512)


# -- schemes ------------------------------------------------------------------

def test_q_rules():
    assert np.allclose(q_sequence([4, 16]), [0.5, 0.25])
    assert np.allclose(q_sequence([1, 2], "median_mass", [[0.04, 0.01, 0.09], [0.16]]), [0.2, 0.4])
    with pytest.raises(ValueError):
        q_sequence([1], "median_mass")
    with pytest.raises(ValueError):
        q_sequence([1], "bogus")


def test_summability_surrogates():
    ms = np.arange(10, 41, 5)
    good = build_interval_scheme(ms, "fixed", centers=ms ** 2.0, half_width=ms ** -2.0)
    assert good.tail_decreasing and good.q_decreasing
    assert good.sum_l == pytest.approx(np.sum(ms ** -2.0))
    assert good.sum_l_over_q == pytest.approx(np.sum(ms ** -1.5))
    constant = build_interval_scheme(ms, "fixed", centers=ms ** 2.0, half_width=0.3)
    assert not constant.tail_decreasing


def test_scheme_validation():
    with pytest.raises(ValueError):
        build_interval_scheme([10], "beam_defect", centers=[1.0], defects=[0.1], c=0.5)
    with pytest.raises(SchemeError):
        build_interval_scheme([10], "fixed", centers=[1.0], half_width=0.0)
    with pytest.raises(SchemeError):
        build_interval_scheme([10], "envelope", branch_lo=[2.0], branch_hi=[1.0])
    with pytest.raises(ValueError):
        build_interval_scheme([10], "bogus")


def test_thinning_keeps_provenance():
    ms = [10, 20, 30, 40]
    s = build_interval_scheme(ms, "beam_defect", centers=[1, 2, 3, 4], defects=[0.1] * 4, c=1.1)
    sub = s.thinned([0, 2])
    assert list(sub.m) == [10, 30] and sub.provenance == ["beam_defect(c=1.1)"] * 2
    assert np.allclose(sub.half_width, 0.11)


# -- separable regime ---------------------------------------------------------

def test_envelope_captures_every_t(separable_run):
    fam, scheme, report = separable_run
    assert np.all(report.counts >= 1)
    fails = verify_capture(scheme, lambda m, t: assemble_sector(fam, m, t, 512), fam.t_grid)
    assert fails == []


def test_separable_mass_over_q_decreases(separable_run):
    _, scheme, report = separable_run
    ratio = report.sup_mass / scheme.q[:, None]
    assert np.all(np.diff(ratio, axis=0) < 0)


def test_drift_bounded_by_speed(separable_run):
    _, scheme, report = separable_run
    drift = report.meta["branch_hi"] - report.meta["branch_lo"]
    speed = np.array([[np.max(mu * ms) for mu, ms in zip(mr, mm)] for mr, mm in zip(report.mu, report.masses)])
    assert np.all(drift <= speed.max(axis=1) * 1.05)


def test_weyl_count_invariant(separable_run):
    _, _, report = separable_run
    assert np.all(report.counts <= report.count0[:, None])


def test_envelope_width_approaches_inverse_square(torus):
    fam = ConformalFamily(torus, make_flat_factor(torus, 8))
    ms = np.array([10, 20, 40, 80, 160])
    l = np.array([sector_ground_state(assemble_sector(fam, m, 1.0, 1024))[0]
                  - sector_ground_state(assemble_sector(fam, m, 0.0, 1024))[0] for m in ms])
    local = np.diff(np.log(l)) / np.diff(np.log(ms))
    assert np.all(np.diff(local) < 0)
    assert local[-1] == pytest.approx(-2.0, abs=0.15)


def test_constant_factor_negative_control(torus):
    fam = ConformalFamily.uniform(torus, constant_factor(0.5), 5)
    scheme, report = separable_experiment(fam, [10, 20], N_s=256)
    for row in report.masses:
        for mm in row:
            assert np.allclose(mm, 0.5, rtol=1e-12)
    audit = bad_set_audit(report, (1.0, 0.3))
    assert not report.hypotheses_ok
    assert np.all(audit.measured == 1.0)
    assert all(v.startswith("fail: hypotheses violated") for row in audit.verdicts for v in row)


def test_audit_with_zero_masses():
    scheme = build_interval_scheme([10, 20], "fixed", centers=[100.0, 400.0], half_width=0.1)
    t = np.linspace(0, 1, 5)
    zeros = [[np.zeros(1)] * 5 for _ in range(2)]
    ones = [[np.ones(1)] * 5 for _ in range(2)]
    rep = ConcentrationReport(scheme, t, "separable", ones, zeros, np.array([3, 5]), True)
    audit = bad_set_audit(rep)
    assert np.all(audit.measured == 0) and audit.all_pass and audit.monotone_in_eps
    assert audit.good_set_estimate == {1.0: 1.0, 0.3: 1.0, 0.1: 1.0}


def test_factor_in_cone(torus):
    assert factor_in_cone(torus, make_flat_factor(torus, 8))[0]
    assert factor_in_cone(torus, make_coupled_factor(torus, 8, 1.0, 0.3))[0]
    ok, note = factor_in_cone(torus, constant_factor(1.0))
    assert not ok and "not in cone" in note
    assert not factor_in_cone(torus, constant_factor(0.0))[0]


# -- coupled regime -----------------------------------------------------------

def test_symmetric_quasimode_is_exact_at_t0(torus):
    fam = ConformalFamily(torus, make_coupled_factor(torus, 8, 1.0, 0.3))
    lam, U = symmetric_quasimode(fam, 6, 64, 32)
    op0 = assemble_coupled(fam, 0.0, 64, 32)
    assert quasimode_defect(op0, lam, U) < 1e-9 * lam
    G = U.T @ (op0.weight[:, None] * U)
    assert np.allclose(G, np.eye(2), atol=1e-12)
    assert quasimode_defect(assemble_coupled(fam, 1.0, 64, 32), lam, U) > 1e-4


def test_coupled_windows_capture(coupled_run):
    _, report = coupled_run
    assert np.all(report.counts >= 1)
    assert np.all(report.counts <= report.count0[:, None])


def test_coupled_bad_sets_monotone_in_epsilon(coupled_run):
    _, report = coupled_run
    audit = bad_set_audit(report)
    assert audit.monotone_in_eps
    assert np.all(np.diff(audit.measured[:, np.argsort(audit.epsilons)], axis=1) <= 0)


@pytest.mark.parametrize("eps", [
    pytest.param(1.0, marks=pytest.mark.xfail(strict=True, reason="at eps=1 only 0-3 grid points per m are bad; "
                                                                 "the counts do not trend down over m=8..16")),
    0.3, 0.1])
def test_coupled_bad_sets_shrink_with_m(coupled_run, eps):
    _, report = coupled_run
    audit = bad_set_audit(report)
    e = list(audit.epsilons).index(eps)
    slope = np.polyfit(np.asarray(COUPLED_MS, dtype=float), audit.measured[:, e], 1)[0]
    assert slope < 0


# -- sampler ------------------------------------------------------------------

def test_basis_is_nonnegative_and_summable(torus):
    spec = CubeMeasureSpec(torus)
    s = torus.grid(2000)
    for i in range(1, spec.n_basis + 1):
        e = spec.basis(i, s)
        assert np.all(e >= 0) and np.max(e) <= spec.weights[i - 1] + 1e-15
    assert spec.tail_fraction() <= 1e-5


def test_sampler_is_deterministic(torus):
    spec = CubeMeasureSpec(torus)
    s = torus.grid(1000)
    a = sample_conformal_factor(spec, 7)(s)
    b = sample_conformal_factor(spec, 7)(s)
    c = sample_conformal_factor(spec, 8)(s)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_samples_in_cone(torus):
    spec = CubeMeasureSpec(torus)
    for seed in range(10):
        cert = cone_certificate(spec, sample_conformal_factor(spec, seed))
        assert cert["ok"] and cert["min_ratio"] >= spec.cone_constant


def test_zero_draw_rejected(torus):
    spec = CubeMeasureSpec(torus, anchor=0.0)
    with pytest.raises(ConeViolation):
        factor_from_coefficients(spec, np.zeros(spec.n_basis))
    with pytest.raises(ValueError):
        factor_from_coefficients(spec, np.full(spec.n_basis, 1.5))


def test_sampled_factor_drives_concentration(torus):
    spec = CubeMeasureSpec(torus)
    fam = ConformalFamily.uniform(torus, sample_conformal_factor(spec, 3), 5)
    _, report = separable_experiment(fam, [10, 20], N_s=256)
    assert report.hypotheses_ok
    assert np.all(report.counts >= 1)
