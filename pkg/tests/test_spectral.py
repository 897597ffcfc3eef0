import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hohomog.errors import ValidationError
from hohomog.spectral import EllipticOperator, GridFunction, torus


def test_derivative_of_mode():
    g = torus(1, 32)
    y = np.arange(32) / 32
    np.testing.assert_allclose(g.derivative(np.sin(2 * np.pi * 3 * y), (2,)),
                               -(6 * np.pi) ** 2 * np.sin(2 * np.pi * 3 * y), atol=1e-9)


def test_nyquist_removed():
    g = torus(1, 8)
    v = np.cos(np.pi * np.arange(8))  # Nyquist mode
    assert np.max(np.abs(g.derivative(v, (1,)))) < 1e-14
    assert np.max(np.abs(g.project(v))) < 1e-14


def test_bad_torus_resolution():
    with pytest.raises(ValidationError):
        torus(1, 6 + 1)


def test_grid_function_checks():
    with pytest.raises(ValidationError):
        GridFunction(np.ones((1, 4, 5)))
    with pytest.raises(ValidationError):
        GridFunction(np.ones(8), zero_mean=True)
    f = GridFunction(np.linspace(0, 1, 5), domain="interval")
    assert f.spacing == pytest.approx(0.25)
    assert f.mean()[0] == pytest.approx(0.5)


@given(seed=st.integers(0, 10_000), d=st.sampled_from([1, 2]), m=st.sampled_from([1, 2]))
def test_divergence_is_adjoint_of_gradient(seed, d, m):
    rng = np.random.default_rng(seed)
    N = 8
    g = torus(d, N)
    op = EllipticOperator(np.zeros((d if m == 1 else (3 if d == 2 else 1),) * 2 + (1, 1) + (N,) * d), m, g)
    u = g.project(rng.standard_normal((1,) + (N,) * d))
    flux = rng.standard_normal((len(op.alphas), 1) + (N,) * d)
    lhs = np.sum(op.gradient(u) * flux)
    rhs = np.sum(u * op.divergence(flux))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@given(seed=st.integers(0, 10_000))
def test_operator_symmetric_for_symmetric_coefficient(seed):
    rng = np.random.default_rng(seed)
    N = 8
    g = torus(1, N)
    a = 2 + rng.random(N)
    op = EllipticOperator(a.reshape(1, 1, 1, 1, N), 2, g)
    u, v = (g.project(rng.standard_normal((1, N))) for _ in range(2))
    assert np.sum(v * op.apply(u)) == pytest.approx(np.sum(u * op.apply(v)), rel=1e-10)


def test_constant_coefficient_solve_is_exact():
    N = 32
    g = torus(1, N)
    op = EllipticOperator(np.full((1, 1, 1, 1, N), 2.0), 2, g)
    y = np.arange(N) / N
    b = np.sin(2 * np.pi * y)[None]
    u, info = op.solve(b, 1e-12, 50)
    np.testing.assert_allclose(u[0], np.sin(2 * np.pi * y) / (2 * (2 * np.pi) ** 4), atol=1e-14)
    assert info["residual"] <= 1e-12


def test_operator_shape_checked():
    with pytest.raises(ValidationError):
        EllipticOperator(np.ones((1, 1, 1, 1, 8)), 1, torus(1, 16))
