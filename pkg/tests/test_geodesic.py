from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from quasimodes.geodesic import (find_equators, integrate_jacobi, is_elliptic_generic, outer_equator,
                                 poincare_map, rotation_data)
from quasimodes.surface import SurfaceOfRevolution


def test_torus_has_two_equators(torus):
    eqs = find_equators(torus)
    assert [g.stability for g in eqs] == ["stable", "unstable"]
    assert eqs[0].s_gamma == pytest.approx(0.0, abs=1e-12)
    assert eqs[1].s_gamma == pytest.approx(math.pi)
    assert eqs[0].period == pytest.approx(6 * math.pi)


def test_flat_profile_is_degenerate(flat_torus):
    (g,) = find_equators(flat_torus)
    assert g.stability == "degenerate"
    with pytest.raises(ValueError):
        outer_equator(flat_torus)


@pytest.mark.parametrize("R,a", [(2.0, 1.0), (3.0, 1.0), (5.0, 0.7)])
def test_constant_curvature_monodromy(R, a):
    geo = outer_equator(SurfaceOfRevolution.torus(R, a))
    pm = poincare_map(geo)
    w = math.sqrt(1 / (a * (R + a)))
    T = 2 * math.pi * (R + a)
    exact = np.array([[math.cos(w * T), math.sin(w * T) / w], [-w * math.sin(w * T), math.cos(w * T)]])
    assert np.max(np.abs(pm.monodromy - exact)) < 1e-10
    assert pm.winding_theta_full == pytest.approx(w * T, abs=1e-9)
    assert pm.det == pytest.approx(1.0, abs=1e-12)


def test_variable_curvature_against_ivp():
    def K(s):
        return 1.0 + 0.3 * math.cos(s)

    pm = integrate_jacobi(K, 2 * math.pi)
    cols = []
    for y0 in ([1.0, 0.0], [0.0, 1.0]):
        sol = solve_ivp(lambda s, y: [y[1], -K(s) * y[0]], (0, 2 * math.pi), y0, rtol=1e-12, atol=1e-13)
        cols.append(sol.y[:, -1])
    assert np.max(np.abs(pm.monodromy - np.array(cols).T)) < 1e-8
    assert pm.det == pytest.approx(1.0, abs=1e-10)


def test_inner_equator_is_hyperbolic(torus):
    inner = find_equators(torus)[1]
    pm = poincare_map(inner)
    assert abs(pm.trace) > 2
    assert pm.winding_theta_full is None
    assert is_elliptic_generic(pm).kind == "hyperbolic"


def test_flat_curvature_is_parabolic():
    pm = integrate_jacobi(lambda s: 0.0, 2 * math.pi)
    assert is_elliptic_generic(pm).kind == "parabolic"
    pm = integrate_jacobi(lambda s: 1.0, 2 * math.pi)      # full turn: M = I
    assert is_elliptic_generic(pm).kind == "parabolic"


def test_irrational_rotation_is_generic():
    assert is_elliptic_generic(rotation_data(2 * math.pi * (math.sqrt(3) - 1))).is_generic
    assert is_elliptic_generic(rotation_data(2 * math.pi * math.sqrt(3))).is_generic


@settings(max_examples=60)
@given(st.integers(2, 50).flatmap(lambda q: st.tuples(st.just(q), st.integers(1, q - 1))))
def test_rational_rotation_detected_with_reduced_denominator(pq):
    q, p = pq
    frac = Fraction(p, q)
    kind = is_elliptic_generic(rotation_data(2 * math.pi * float(frac)))
    if frac.denominator == 2:
        assert kind.kind == "parabolic"
    else:
        assert kind.kind == "root_of_unity_suspect"
        assert kind.q == frac.denominator


def test_one_third_flagged():
    kind = is_elliptic_generic(rotation_data(2 * math.pi / 3))
    assert (kind.kind, kind.q) == ("root_of_unity_suspect", 3)


def test_non_equator_rejected(torus):
    from quasimodes.geodesic import ClosedGeodesic
    with pytest.raises(ValueError):
        poincare_map(ClosedGeodesic(torus, 1.0, 1.0, "stable"))
