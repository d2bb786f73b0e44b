from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasimodes.flow import (BranchTable, NearCrossingError, branch_gaps, build_branches, check_hadamard,
                             monotonicity_audit, sojourn_measure)
from quasimodes.spectral import global_spectrum
from quasimodes.surface import ConformalFamily, constant_factor, make_flat_factor


@pytest.fixture(scope="module")
def small_table(torus):
    fam = ConformalFamily.uniform(torus, make_flat_factor(torus, 8), 21)
    return fam, build_branches(fam, 4.0, N_s=128)


def test_branches_start_at_base_spectrum(small_table):
    fam, table = small_table
    base = global_spectrum(fam, 0.0, 4.0, N_s=128)
    assert table.J == len(base)
    assert np.array_equal(table.mu[0], base.eigenvalues)


def test_branches_are_nondecreasing(small_table):
    assert monotonicity_audit(small_table[1]) == []


def test_threads_do_not_change_results(small_table):
    fam, table = small_table
    again = build_branches(fam, 4.0, N_s=128, jobs=3)
    assert np.array_equal(again.mu, table.mu) and np.array_equal(again.mass, table.mass)


def test_planted_decrease_is_reported(small_table):
    table = small_table[1]
    mu = table.mu.copy()
    mu[5, 3] = mu[4, 3] - 1e-3
    bad = BranchTable(table.t_grid, mu, table.mass, table.gap)
    assert (3, 4) in monotonicity_audit(bad)


def test_hadamard_constant_factor_closed_form(torus):
    c = 0.6
    fam = ConformalFamily.uniform(torus, constant_factor(c), 11)
    table = build_branches(fam, 3.0, N_s=128)
    j = 1
    k = 5
    rep = check_hadamard(table, fam, j, float(table.t_grid[k]))
    exact = c * table.mu[0, j] * math.exp(c * table.t_grid[k])
    assert rep.predicted == pytest.approx(exact, rel=1e-10)
    assert rep.richardson == pytest.approx(exact, rel=1e-8)


def test_hadamard_flat_factor(small_table):
    fam, table = small_table
    checked = 0
    for j in range(1, table.J):
        try:
            rep = check_hadamard(table, fam, j, 0.5)
        except NearCrossingError:
            continue
        assert rep.relative < 1e-6
        assert rep.residual_richardson <= max(rep.residual, 1e-8 * rep.mu)
        checked += 1
    assert checked >= 5


def test_exact_crossing_is_refused(flat_torus):
    fam = ConformalFamily.uniform(flat_torus, constant_factor(0.5), 11)
    table = build_branches(fam, 2.5, N_s=128)
    with pytest.raises(NearCrossingError):
        check_hadamard(table, fam, 1, 0.5)       # mu = 1 shared by sectors 0 and 1


def test_partner_is_not_a_gap():
    mu = np.array([1.0, 2.0, 2.0, 3.5])
    sector = np.array([0, 1, 1, 0])
    parity = np.array([0, 0, 1, 0])
    assert np.allclose(branch_gaps(mu, sector, parity), [1.0, 1.0, 1.0, 1.5])


@settings(max_examples=50)
@given(st.floats(0.5, 5.0), st.floats(0.0, 2.0), st.floats(0.05, 0.95), st.floats(0.01, 0.5))
def test_sojourn_exact_for_linear(slope, offset, mid, width):
    t = np.linspace(0, 1, 101)
    F = offset + slope * t
    lo = offset + slope * (mid - width / 2)
    hi = offset + slope * (mid + width / 2)
    rep = sojourn_measure(F, t, (lo, hi), slope)
    inside = min(1.0, mid + width / 2) - max(0.0, mid - width / 2)
    assert rep.measured == pytest.approx(inside, abs=1e-12)
    assert rep.hypothesis_met and rep.verdict


def test_sojourn_flags_violated_hypothesis():
    t = np.linspace(0, 1, 11)
    F = np.where(t < 0.5, t, 0.5)           # flat for t >= 0.5
    rep = sojourn_measure(F, t, (0.45, 0.55), 1.0)
    assert not rep.hypothesis_met and not rep.verdict


def test_sojourn_rejects_decreasing():
    with pytest.raises(ValueError):
        sojourn_measure([1.0, 0.5], [0.0, 1.0], (0.0, 1.0), 1.0)
