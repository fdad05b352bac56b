import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from axiswirl.grid import EVEN, ODD, Field2D, FlowState, make_grid
from axiswirl.quadrature import (CoverageError, Cylinder, ExponentParams, FlowHistory,
                                 SWEEP_COLUMNS, alpha_zero, ball_integral, ball_weights,
                                 cylinder_quantities, mixed_norm_b, quantity_A, quantity_C,
                                 quantity_D, quantity_E, quantity_G, sweep_to_csv, sweep_to_json,
                                 trapezoid_weights, weight_omega)


def _ball_oracle(fn, x03, R):
    """3D ball integral of an axisymmetric ``fn(r, z)`` by adaptive quadrature."""
    val, _ = integrate.dblquad(lambda z, r: 2 * math.pi * r * fn(r, z), 0, R,
                               lambda r: x03 - math.sqrt(max(R * R - r * r, 0.0)),
                               lambda r: x03 + math.sqrt(max(R * R - r * r, 0.0)),
                               epsabs=1e-13, epsrel=1e-11)
    return val


@pytest.fixture(scope="module")
def rigid_history():
    g = make_grid(64, 128, 0.5, -0.5, 0.5)
    R, Z = g.mesh()
    pi = 0.5 * R**2 - 0.05
    snaps = [FlowState(t, Field2D.zeros(g, ODD), Field2D(g, R, ODD), Field2D.zeros(g),
                       Field2D(g, pi, EVEN)) for t in np.linspace(0.0, 0.0625, 9)]
    return FlowHistory(snaps)


def test_ball_of_ones_is_exact():
    g = make_grid(32, 64, 1.0, -1.0, 1.0)
    one = Field2D(g, np.ones(g.shape), EVEN)
    assert abs(ball_integral(one, 0.0, 1.0) / (4 * math.pi / 3) - 1) < 1e-12


@settings(max_examples=30, deadline=None)
@given(x03=st.floats(-0.2, 0.2), R=st.floats(0.05, 0.3))
def test_ball_volume_any_center(x03, R):
    g = make_grid(24, 48, 0.5, -0.5, 0.5)
    w = ball_weights(g, x03, R)
    assert abs(w.sum() / (4 * math.pi / 3 * R**3) - 1) < 1e-10
    assert np.all(w >= 0)


def test_ball_of_r_squared_matches_oracle():
    g = make_grid(64, 128, 0.5, -0.5, 0.5)
    f = Field2D(g, g.mesh()[0] ** 2, EVEN)
    exact = 8 * math.pi * 0.25**5 / 15
    assert abs(ball_integral(f, 0.0, 0.25) / exact - 1) < 1e-3


def test_ball_power_guard():
    g = make_grid(8, 8, 0.5, -0.5, 0.5)
    with pytest.raises(ValueError):
        ball_integral(Field2D.zeros(g), 0.0, 0.1, power=0.5)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), a=st.floats(0, 1), span=st.floats(0.01, 1))
def test_trapezoid_weights_integrate_linear(n, a, span):
    t = np.linspace(0, 2, n)
    b = min(a + span, 2.0)
    w = trapezoid_weights(t, a, b)
    assert abs(w.sum() - (b - a)) < 1e-12
    assert abs(w @ (3 * t + 1) - (1.5 * (b * b - a * a) + (b - a))) < 1e-12


def test_weight_omega():
    assert weight_omega(0.25) == pytest.approx(1 / math.log(math.log(400)))
    with pytest.raises(ValueError):
        weight_omega(0.3)
    with pytest.raises(ValueError):
        weight_omega(0.0)


@pytest.mark.parametrize("kw,needle", [
    ({"p": 3.0, "q": 3.0}, "3/p + 2/q"),
    ({"alpha": 0.02}, "alpha"),
    ({"beta": 0.2}, "beta"),
    ({"tau": 1.0}, "tau"),
])
def test_exponent_couplings_are_enforced(kw, needle):
    with pytest.raises(ValueError, match=re.escape(needle)):
        ExponentParams(**kw)


def test_default_exponents():
    P = ExponentParams()
    assert 3 / P.p + 2 / P.q == pytest.approx(2 - P.gamma_exp)
    assert P.alpha == pytest.approx(P.gamma_exp * P.beta / (6 + 2 * P.gamma_exp))
    assert P.alpha < alpha_zero(P.gamma_exp)


def test_rigid_rotation_quantities(rigid_history):
    h, R = rigid_history, 0.25
    c = Cylinder(0.0, 0.0625, R)
    assert quantity_A(h, c) == pytest.approx(8 * math.pi * R**4 / 15, rel=2e-3)
    assert quantity_E(h, c) == pytest.approx(8 * math.pi * R**4 / 3, rel=2e-3)
    cube = _ball_oracle(lambda r, z: r**3, 0.0, R)
    assert quantity_C(h, c) == pytest.approx(cube, rel=2e-3)
    pres = _ball_oracle(lambda r, z: abs(0.5 * r * r - 0.05) ** 1.5, 0.0, R)
    assert quantity_D(h, c) == pytest.approx(pres, rel=5e-3)
    assert quantity_G(h, c, 10 / 3, 10 / 3) == 0.0


def test_sweep_table(rigid_history):
    rows = [cylinder_quantities(rigid_history, Cylinder(0.0, 0.0625, R), with_besov=False)
            for R in (0.25, 0.125)]
    for q in rows:
        assert q.script_E == pytest.approx(q.A + q.E + q.D)
        assert q.G_alpha == 0.0
    text = sweep_to_csv(rows)
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert len(text.splitlines()) == 3
    data = json.loads(sweep_to_json(rows))
    assert data["rows"][0]["B"] is None
    assert set(data["params"]) == {"p", "q", "gamma_exp", "alpha", "beta"}


def test_omega_undefined_above_quarter():
    g = make_grid(16, 32, 0.5, -0.5, 0.5)
    h = FlowHistory([FlowState.zeros(g, t) for t in np.linspace(0, 0.1, 3)])
    q = cylinder_quantities(h, Cylinder(0.0, 0.1, 0.3), with_besov=False)
    assert math.isnan(q.omega) and math.isnan(q.G_alpha)
    assert q.A == q.E == q.C == q.D == 0.0


def test_coverage_errors(rigid_history):
    with pytest.raises(CoverageError):
        quantity_A(rigid_history, Cylinder(0.0, 0.0625, 0.3))
    with pytest.raises(ValueError):
        quantity_A(rigid_history, Cylinder(0.4, 0.0625, 0.2))


def test_history_validation():
    g = make_grid(8, 8, 0.5, -0.5, 0.5)
    z = FlowState.zeros(g)
    with pytest.raises(ValueError):
        FlowHistory([])
    with pytest.raises(ValueError):
        FlowHistory([FlowState.zeros(g, 0.1), FlowState.zeros(g, 0.0)])
    with pytest.raises(ValueError):
        FlowHistory([FlowState.zeros(g, t) for t in (0.0, 0.1, 0.3)])
    assert len(FlowHistory([z])) == 1


def test_mixed_norm_infinite_exponents():
    g = make_grid(16, 32, 0.5, -0.5, 0.5)
    R, Z = g.mesh()
    snaps = [FlowState(t, Field2D(g, (1 + t) * R * Z, ODD), Field2D.zeros(g, ODD),
                       Field2D.zeros(g), Field2D.zeros(g)) for t in np.linspace(0, 0.04, 5)]
    h = FlowHistory(snaps)
    c = Cylinder(0.0, 0.04, 0.2)
    w = ball_weights(g, 0.0, 0.2) > 0
    expect = 1.04 * np.max(np.abs(R * Z)[w])
    assert mixed_norm_b(h, c, math.inf, math.inf) == pytest.approx(expect)
