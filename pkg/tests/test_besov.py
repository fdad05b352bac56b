import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axiswirl.besov import besov_norm_b, gaussian_bump_oracle
from axiswirl.grid import EVEN, ODD, Field2D, FlowState, make_grid


def _bump(N, a=1.0, sigma=0.1, z0=0.0, half=0.5):
    g = make_grid(N, 2 * N, half, -half, half)
    R, Z = g.mesh()
    u3 = a * np.exp(-(R**2 + (Z - z0) ** 2) / (2 * sigma**2))
    return FlowState(0.0, Field2D.zeros(g, ODD), Field2D.zeros(g, ODD), Field2D(g, u3, EVEN),
                     Field2D.zeros(g))


def test_gaussian_oracle_value():
    val, s_star = gaussian_bump_oracle(2.0, 0.1)
    # sqrt(s) * a * (sigma^2 / (sigma^2 + 2 s))^(3/2) peaks at s = sigma^2 / 4
    f = lambda s: math.sqrt(s) * 2.0 * (0.01 / (0.01 + 2 * s)) ** 1.5
    assert f(s_star) == pytest.approx(val)
    assert f(s_star * 1.01) < val and f(s_star * 0.99) < val


def test_gaussian_bump_matches_oracle():
    got = besov_norm_b(_bump(64), S=0.25)
    want, _ = gaussian_bump_oracle(1.0, 0.1)
    assert abs(got / want - 1) < 2e-3


def test_refinement_helps():
    want, _ = gaussian_bump_oracle(1.0, 0.1)
    st0 = _bump(48)
    coarse = abs(besov_norm_b(st0, 0.25, refine=False) / want - 1)
    fine = abs(besov_norm_b(st0, 0.25) / want - 1)
    assert fine <= coarse


def test_zero_field_and_bad_horizon():
    g = make_grid(8, 8, 0.5, -0.5, 0.5)
    assert besov_norm_b(FlowState.zeros(g), 0.1) == 0.0
    with pytest.raises(ValueError):
        besov_norm_b(_bump(16), 0.0)


@settings(max_examples=5, deadline=None)
@given(a=st.floats(0.1, 10.0))
def test_homogeneous_in_amplitude(a):
    base = besov_norm_b(_bump(32), 0.25)
    assert besov_norm_b(_bump(32, a=a), 0.25) == pytest.approx(a * base, rel=1e-9)


def test_translation_along_axis():
    a = besov_norm_b(_bump(48), 0.25)
    b = besov_norm_b(_bump(48, z0=0.1), 0.25)
    assert abs(a / b - 1) < 2e-3


def test_horizon_monotone():
    st0 = _bump(32)
    vals = [besov_norm_b(st0, S) for S in (1e-4, 1e-3, 0.01, 0.25)]
    assert all(v2 >= v1 * (1 - 1e-3) for v1, v2 in zip(vals, vals[1:]))
