import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hohomog import coeffs, rates, solvers
from hohomog.cellproblem import solve_all
from hohomog.errors import FitError, ValidationError
from hohomog.spectral import GridFunction


def interval(values, lo=-1.0, hi=1.0):
    n = values.shape[-1]
    return GridFunction(values, domain="interval", lo=lo, spacing=(hi - lo) / (n - 1))


X = np.linspace(-1, 1, 4097)


def test_sobolev_exponents():
    assert rates.sobolev_exponents(2, 1)["q0"] == 4
    assert rates.sobolev_exponents(1, 2)["q0"] is None


def test_norms_of_simple_functions():
    assert rates.norm(GridFunction(np.zeros(16))) == 0.0
    x = np.arange(64) / 64
    f = GridFunction(np.sin(2 * np.pi * x))
    assert rates.norm(f) == pytest.approx(np.sqrt(0.5))
    assert rates.norm(f, "Hk_semi", k=1) == pytest.approx(2 * np.pi * np.sqrt(0.5))
    assert rates.norm(f, "Lq", q=np.inf) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValidationError):
        rates.norm(f, "H3")


def test_interval_norm_prefers_exact_derivatives():
    x = np.linspace(0, 1, 9)
    f = GridFunction(x[None] ** 2, domain="interval", derivatives={1: (2 * x)[None], 2: np.full((1, 9), 2.0)})
    assert rates.norm(f, "Hk_semi", k=2) == pytest.approx(2.0, rel=1e-14)


@given(p=st.floats(0.2, 3.0), c=st.floats(0.01, 100.0))
def test_rate_fit_recovers_power_law(p, c):
    eps = [2.0**-k for k in range(3, 8)]
    fit = rates.rate_fit([(e, c * e**p) for e in eps])
    assert abs(fit.slope - p) <= 1e-12 * max(1, p)
    assert fit.r2 == pytest.approx(1.0)


def test_rate_fit_refuses_solver_floor_and_short_input():
    eps = [1 / 8, 1 / 16, 1 / 32]
    with pytest.raises(FitError):
        rates.rate_fit([(e, 5e-10) for e in eps], solver_tol=1e-10)
    with pytest.raises(FitError):
        rates.rate_fit([(1 / 8, 1.0), (1 / 16, 0.5)])
    rep = rates.RateReport("x", "L2")
    rep.add(1 / 8, 1.0, "c")
    with pytest.raises(ValidationError):
        rep.add(1 / 4, 1.0, "c")


def test_build_w_without_corrector_is_difference():
    N = 32
    x = np.arange(N) / N
    A = coeffs.constant(2.0, 16, m=2)
    cs = solve_all(A)
    assert np.all(cs.chi == 0)
    ue = GridFunction(np.sin(2 * np.pi * x) + 0.1 * np.cos(6 * np.pi * x))
    u0 = GridFunction(np.sin(2 * np.pi * x))
    w = rates.build_w(ue, u0, cs, 1 / 4)
    np.testing.assert_array_equal(w.values, ue.values - u0.values)


def test_build_w_interval_without_corrector_is_difference():
    cs = solve_all(coeffs.constant(2.0, 16, m=2))
    x = np.linspace(0, 1, 1025)
    ue = GridFunction((x**3)[None], domain="interval", derivatives={1: (3 * x**2)[None], 2: (6 * x)[None]})
    u0 = GridFunction((x**2)[None], domain="interval", derivatives={1: (2 * x)[None], 2: np.full((1, 1025), 2.0)})
    w = rates.build_w(ue, u0, cs, 1 / 16)
    np.testing.assert_array_equal(w.values, ue.values - u0.values)


# -- excess functionals ------------------------------------------------------------

@given(coef=st.lists(st.floats(-5, 5), min_size=3, max_size=3), m=st.sampled_from([1, 2]),
       r=st.sampled_from([0.5, 0.25, 0.125]))
def test_H_invariant_under_polynomial_subtraction(coef, m, r):
    base = np.sin(3 * X) + np.exp(X)
    poly = sum(c * X**k for k, c in enumerate(coef[: m + 1]))
    h1 = rates.excess_H(interval(base[None]), 0.0, r, m).value
    h2 = rates.excess_H(interval((base - poly)[None]), 0.0, r, m).value
    assert abs(h1 - h2) <= 1e-10 * max(h1, 1e-300)


@given(c=st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3), r=st.sampled_from([0.5, 0.125]))
def test_functionals_homogeneous(c, r):
    u = interval((np.sin(5 * X) + X**3)[None])
    cu = interval(c * u.values)
    for fn in (rates.excess_H, rates.excess_I):
        assert fn(cu, 0.0, r, 2).value == pytest.approx(abs(c) * fn(u, 0.0, r, 2).value, rel=1e-10)


@given(r=st.sampled_from([0.25, 0.125, 1 / 16]), m=st.sampled_from([1, 2]))
def test_larger_space_never_increases_residual(r, m):
    u = interval((np.sin(7 * X) + np.cosh(X))[None])
    assert rates.excess_H(u, 0.0, 2 * r, m).value <= rates.excess_I(u, 0.0, 2 * r, m).value * (1 + 1e-12)


def test_H_of_quadratic_for_first_order():
    # x^2 on B(0, r), best affine fit is r^2/3; residual^2 = r^4 (1/5 - 1/9)
    u = interval((X**2)[None])
    r = 0.5
    assert rates.excess_H(u, 0.0, r, 1).value == pytest.approx(r * np.sqrt(1 / 5 - 1 / 9), rel=1e-5)
    assert rates.excess_H(u, 0.0, r, 2).value < 1e-12


def test_coeff_h():
    assert rates.coeff_h([[1.0, 2.0, -3.0]], 2) == 3.0
    assert rates.coeff_h([[1.0, 2.0]], 2) == 0.0


def test_constant_coefficient_G_halves():
    u = interval((X**3 + 0.3 * X**4)[None])
    rep = rates.certify_excess_decay(u, 0.0, 2, deltas=(1 / 8,), constant_coefficient=True)
    assert rep.rows and all(rep.verdicts(0.0))


def test_ball_validation():
    u = interval((X**2)[None])
    with pytest.raises(ValidationError):
        rates.ball_mean(u, 0.9, 0.5)
    with pytest.raises(ValidationError):
        rates.ball_mean(u, 0.0, -1.0)
    with pytest.raises(FitError):
        rates.poly_fit(u, 0.0, 2 * u.spacing, 2)


# -- probes --------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2])
def test_lipschitz_probe_monomial(m):
    u = interval((X**m)[None])
    out = rates.lipschitz_probe(u, 1 / 16, m)
    assert out["sup"] == pytest.approx(math.factorial(m) * np.sqrt(2 * m + 1), rel=1e-5)


def test_lipschitz_probe_polynomial_of_lower_degree():
    u = interval((1 + X)[None])
    assert rates.lipschitz_probe(u, 1 / 16, 2)["sup"] == 0.0


def test_lipschitz_radii_window():
    with pytest.raises(ValidationError):
        rates.lipschitz_probe(interval((X**2)[None]), 1 / 16, 2, radii=[1 / 64])


@pytest.mark.parametrize("p", [3, 4, 7.5])
def test_reverse_holder_monomial_exact(p):
    assert rates.reverse_holder_probe(interval((X**2)[None]), p, 2) == pytest.approx(1.0, rel=1e-12)


def test_reverse_holder_degenerate_and_invalid():
    assert rates.reverse_holder_probe(interval((1 + X)[None]), 3, 2) == 0.0
    with pytest.raises(ValidationError):
        rates.reverse_holder_probe(interval((X**2)[None]), 2, 2)


def test_kernel_reverse_holder_bounded_first_order():
    vals = []
    for k in range(4, 9):
        u = solvers.exact_kernel_solution_1d(lambda y: 2 + np.cos(2 * np.pi * y), 2.0**-k, 1, (1.0, 0.0))
        vals.append(rates.reverse_holder_probe(u, 4, 1))
    assert max(vals) / min(vals) <= 2
