import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axiswirl.grid import make_grid
from axiswirl.harnack import (DecayParams, DegenerateError, _zeta_mass, decay_envelope_check,
                              decay_ladder, fit_decay_exponent, h_violations, lambda_floor,
                              ladder_to_csv, normalized_h, oscillation, strong_harnack_floor,
                              verify_local_max, verify_weak_harnack, zeta_support)
from axiswirl.quadrature import Cylinder
from axiswirl.solver import Scenario, default_config, run_scenario

from conftest import check_baseline, gamma_history


@pytest.fixture(scope="module")
def parabola():
    return gamma_history(lambda R, Z, t: R**2)


@pytest.fixture(scope="module")
def oseen_run():
    g = make_grid(32, 64, 0.5, -0.5, 0.5)
    scn = Scenario("oseen", "oseen_swirl", {"kappa": 1.0, "t_shift": 0.05}, grid=g,
                   duration=0.0625, cadence=5)
    return run_scenario(scn, default_config(scn, dt=0.0625 / 125, diffusion="cn")).history


def test_ladder_on_parabola(parabola):
    lad = decay_ladder(parabola, 0.0, 0.25, 3, dp=DecayParams())
    for c in lad.contractions:
        assert c == pytest.approx(1 / 16, rel=1e-12)
    dp = fit_decay_exponent(lad, 0.999)
    assert dp.c_fit == pytest.approx(2.0, rel=0.1)
    assert ladder_to_csv(lad).count("\n") == 4


def test_fit_recovers_synthetic_exponent(parabola):
    lad = decay_ladder(parabola, 0.0, 0.25, 3)
    c, tau = 1.7, 0.5
    for lv in lad.levels:
        lv.record.J_R = math.exp(-c * math.log(100 / lv.R) ** tau)
    assert fit_decay_exponent(lad, tau).c_fit == pytest.approx(c, rel=1e-10)


def test_fit_needs_three_levels(parabola):
    with pytest.raises(ValueError):
        fit_decay_exponent(decay_ladder(parabola, 0.0, 0.25, 2), 0.5)


def test_ladder_rejects_unresolved_radius(parabola):
    with pytest.raises(ValueError):
        decay_ladder(parabola, 0.0, 0.25, 5)


def test_zero_swirl_is_degenerate():
    h = gamma_history(lambda R, Z, t: 0 * R, N=16)
    rec = oscillation(h, Cylinder(0.0, 0.0625, 0.25))
    assert rec.degenerate and math.isnan(rec.axis_constant_a)
    with pytest.raises(DegenerateError):
        normalized_h(h.snapshots[-1].gamma, rec)
    assert h_violations(h, Cylinder(0.0, 0.0625, 0.25))["violations"] == 0


@settings(max_examples=20, deadline=None)
@given(amp=st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), k=st.floats(0.5, 8),
       shift=st.floats(-1, 1), decay=st.floats(0, 20))
def test_h_stays_in_range(amp, k, shift, decay):
    h = gamma_history(lambda R, Z, t: amp * R**2 * (shift + np.cos(k * Z)) * math.exp(-decay * t), N=16)
    c = Cylinder(0.1, 0.0625, 0.2)
    rec = oscillation(h, c)
    if rec.degenerate:
        return
    v = h_violations(h, c, rec)
    assert v["violations"] == 0
    assert -1e-12 <= v["h_min"] and v["h_max"] <= 2 + 1e-12
    assert rec.axis_constant_a >= 1
    assert normalized_h(h.snapshots[0].gamma, rec).values[0, 0] == rec.axis_constant_a


def test_cutoff_has_unit_mass():
    b = zeta_support()
    assert 0.5 < b < 1
    assert _zeta_mass(b) == pytest.approx(1.0, abs=1e-10)


def test_lambda_floor_formula():
    assert lambda_floor(0.01, 0.1, 0.5) == pytest.approx(0.1 / math.sqrt(math.log(1e4)))


def test_decay_params_validation():
    for kw in ({"tau": 1.0}, {"beta": 0.125}, {"N7": 0.0}, {"c_fit": -1.0}):
        with pytest.raises(ValueError):
            DecayParams(**kw)


def test_strong_floor_on_parabola(parabola):
    fl = strong_harnack_floor(parabola, Cylinder(0.0, 0.0625, 0.25), DecayParams())
    assert fl["inf_h"] == pytest.approx(1.875)
    assert fl["passes"]


def test_weak_harnack_is_finite(parabola):
    rep = verify_weak_harnack(parabola, Cylinder(0.0, 0.0625, 0.25))
    assert math.isfinite(rep["lhs"]) and rep["ratio"] < 1


def test_oseen_envelope(oseen_run):
    lad = decay_ladder(oseen_run, 0.0, 0.25, 3)
    dp = fit_decay_exponent(lad, 0.5)
    assert dp.c_fit > 0
    env = decay_envelope_check(oseen_run, dp)
    assert env["passes"] and env["standing_assumption"] and env["monotone"]


def test_local_max_regression(oseen_run):
    vals = {}
    for R in (0.25, 0.125):
        rep = verify_local_max(oseen_run, Cylinder(0.0, 0.0625, R))
        vals[f"N_emp_R{R}"] = rep["N_emp"]
    bad = check_baseline("local_max", vals, rtol=0.05)
    assert not bad, bad
