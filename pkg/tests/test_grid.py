import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axiswirl.grid import (EVEN, ODD, Field2D, FlowState, ParityError, axi_laplacian,
                           divergence, grad_sq_raw, make_grid)


@pytest.fixture
def grid():
    return make_grid(16, 24, 0.5, -0.5, 0.5)


@pytest.mark.parametrize("args", [(3, 8, 1, 0, 1), (8, 8, 0, 0, 1), (8, 8, 1, 1, 1)])
def test_make_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_odd_field_must_vanish_on_axis(grid):
    v = np.ones(grid.shape)
    with pytest.raises(ParityError):
        Field2D(grid, v, ODD)
    f = Field2D.from_function(grid, lambda R, Z: 1 + 0 * R, ODD)
    assert np.all(f.values[0] == 0)


def test_values_are_read_only(grid):
    f = Field2D.zeros(grid)
    with pytest.raises(ValueError):
        f.values[1, 1] = 2.0


def test_ghost_reflects_parity(grid):
    f = Field2D.from_function(grid, lambda R, Z: R * (1 + Z), ODD)
    np.testing.assert_array_equal(f.ghost(), -f.values[1])
    e = Field2D.from_function(grid, lambda R, Z: 1 + R**2, EVEN)
    np.testing.assert_array_equal(e.ghost(), e.values[1])


def test_full_laplacian_of_quadratic_is_exact(grid):
    f = Field2D.from_function(grid, lambda R, Z: R**2 + Z**2, EVEN)
    lap = axi_laplacian(f).values
    np.testing.assert_allclose(lap[:-1, 1:-1], 6.0, rtol=1e-10)


def test_swirl_laplacian_kills_rigid_rotation(grid):
    f = Field2D.from_function(grid, lambda R, Z: R, ODD)
    np.testing.assert_allclose(axi_laplacian(f, "swirl").values[:-1, 1:-1], 0.0, atol=1e-9)


def test_gamma_operator_kills_r_squared(grid):
    f = Field2D.from_function(grid, lambda R, Z: R**2, EVEN)
    np.testing.assert_allclose(axi_laplacian(f, "gamma").values[:-1, 1:-1], 0.0, atol=1e-9)


def test_laplacian_mode_parity_guard(grid):
    with pytest.raises(ParityError):
        axi_laplacian(Field2D.zeros(grid, EVEN), "swirl")
    with pytest.raises(ParityError):
        axi_laplacian(Field2D.zeros(grid, ODD), "gamma")


def test_divergence_of_quadratic_solenoidal_field(grid):
    # b = (r z, -z^2): (1/r) d_r(r * r z) = 2 z cancels d_z(-z^2)
    ur = Field2D.from_function(grid, lambda R, Z: R * Z, ODD)
    u3 = Field2D.from_function(grid, lambda R, Z: -Z**2, EVEN)
    np.testing.assert_allclose(divergence(ur, u3).values, 0.0, atol=1e-11)


def test_grad_sq_of_rigid_rotation(grid):
    z = np.zeros(grid.shape)
    ut = grid.mesh()[0]
    np.testing.assert_allclose(grad_sq_raw(z, ut, z, grid), 2.0, rtol=1e-12)


def test_flowstate_gamma_default(grid):
    ut = Field2D.from_function(grid, lambda R, Z: R * np.exp(-Z**2), ODD)
    s = FlowState(0.0, Field2D.zeros(grid, ODD), ut, Field2D.zeros(grid), Field2D.zeros(grid))
    np.testing.assert_allclose(s.gamma.values, grid.mesh()[0] * ut.values)


def test_flowstate_rejects_wrong_parity(grid):
    with pytest.raises(ParityError):
        FlowState(0.0, Field2D.zeros(grid, EVEN), Field2D.zeros(grid, ODD),
                  Field2D.zeros(grid), Field2D.zeros(grid))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), parity=st.sampled_from([EVEN, ODD]))
def test_csv_and_binary_roundtrip(tmp_path_factory, seed, parity):
    g = make_grid(6, 5, 0.3, -0.2, 0.7)
    v = np.random.default_rng(seed).normal(size=g.shape) * 10.0 ** np.random.default_rng(seed).integers(-8, 8)
    if parity == ODD:
        v[0] = 0.0
    f = Field2D(g, v, parity)
    d = tmp_path_factory.mktemp("io")
    f.to_csv(d / "f.csv")
    back = Field2D.from_csv(d / "f.csv")
    assert back.parity == parity and back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
    f.to_binary(d / "f.bin")
    np.testing.assert_array_equal(Field2D.from_binary(d / "f.bin", parity).values, f.values)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3))
def test_laplacian_is_linear(a, b, c):
    g = make_grid(8, 8, 1.0, -1.0, 1.0)
    f1 = Field2D.from_function(g, lambda R, Z: np.cos(R) * Z, EVEN)
    f2 = Field2D.from_function(g, lambda R, Z: R**2 * np.sin(Z), EVEN)
    lhs = axi_laplacian(f1.with_values(a * f1.values + b * f2.values + c)).values
    rhs = a * axi_laplacian(f1).values + b * axi_laplacian(f2).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b) + abs(c)) * 1e3)
