import numpy as np
import pytest

from hohomog import coeffs, rates, solvers
from hohomog.errors import ResolutionError, SolverError, ValidationError
from hohomog.solvers import Dirichlet1D, PeriodicProblem
from hohomog.spectral import GridFunction, torus

SQRT3 = np.sqrt(3.0)


def cos_a(y):
    return 2 + np.cos(2 * np.pi * y)


def one(x):
    return np.ones_like(x)


def hermite_reference(M, a, f, bc):
    """Nodal C^1 cubic Hermite Galerkin solve (2-point Gauss stiffness, 4-point load)."""
    h = 1.0 / M
    g2 = np.array([0.5 - 0.5 / SQRT3, 0.5 + 0.5 / SQRT3])
    g4, w4 = np.polynomial.legendre.leggauss(4)
    g4, w4 = (g4 + 1) / 2, w4 / 2
    n = 2 * (M + 1)
    K, F = np.zeros((n, n)), np.zeros(n)
    for e in range(M):
        B = np.array([[-6 + 12 * t, h * (-4 + 6 * t), 6 - 12 * t, h * (-2 + 6 * t)] for t in g2]) / h**2
        Ke = (B.T * (0.5 * h * a(e * h + g2 * h))) @ B
        Nq = np.array([[1 - 3 * t * t + 2 * t**3, h * (t - 2 * t * t + t**3), 3 * t * t - 2 * t**3,
                        h * (-t * t + t**3)] for t in g4])
        idx = 2 * e + np.arange(4)
        K[np.ix_(idx, idx)] += Ke
        F[idx] += Nq.T @ (w4 * h * f(e * h + g4 * h))
    fixed = np.array([0, 1, n - 2, n - 1])
    free = np.setdiff1d(np.arange(n), fixed)
    u = np.zeros(n)
    u[fixed] = bc
    u[free] = np.linalg.solve(K[np.ix_(free, free)], F[free] - K[np.ix_(free, fixed)] @ u[fixed])
    return u[0::2], u[1::2]


# -- 1D Dirichlet ----------------------------------------------------------------

def test_clamped_beam_oracle():
    sol = solvers.solve_dirichlet_1d(Dirichlet1D(lambda y: np.ones_like(y), None, 2, one, (0, 0, 0, 0), 64))
    x = np.linspace(0, 1, 65)
    np.testing.assert_allclose(sol.nodal[0], x**2 * (1 - x) ** 2 / 24, atol=1e-14)


def test_cubic_data_reproduced():
    # u = x^3 solves u'''' = 0 with its own boundary jets
    sol = solvers.solve_dirichlet_1d(Dirichlet1D(lambda y: np.ones_like(y), None, 2, None, (0, 0, 1, 3), 16))
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(sol(x), x**3, atol=1e-13)
    np.testing.assert_allclose(sol(x, 2), 6 * x, atol=1e-11)


@pytest.mark.parametrize("bc", [(0, 0, 0, 0), (0, 1, 0, -1)])
def test_matches_nodal_hermite_assembly(bc):
    eps = 1 / 4
    a = lambda x: cos_a(x / eps)
    f = lambda x: 1 + x
    u, du = hermite_reference(64, a, f, bc)
    sol = solvers.solve_dirichlet_1d(Dirichlet1D(cos_a, eps, 2, f, bc, 64))
    np.testing.assert_allclose(sol.nodal[0], u, atol=1e-10 * np.max(np.abs(u)))
    np.testing.assert_allclose(sol.nodal[1], du, atol=1e-10 * np.max(np.abs(du)))


def test_second_order_constant_coefficient_nodes_exact():
    sol = solvers.solve_dirichlet_1d(Dirichlet1D(lambda y: np.full(np.shape(y), 2.0), None, 1, one, (0, 0), 32))
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(sol.nodal[0], x * (1 - x) / 4, atol=1e-14)


def test_second_order_quadrature_oracle():
    eps = 1 / 8
    xs = np.linspace(0, 1, 2**16 + 1)
    inv = 1 / cos_a(xs / eps)
    from scipy.integrate import cumulative_trapezoid, trapezoid
    C = trapezoid(xs * inv, xs) / trapezoid(inv, xs)
    exact = cumulative_trapezoid((C - xs) * inv, xs, initial=0.0)
    errs = []
    for M in (256, 512):
        sol = solvers.solve_dirichlet_1d(Dirichlet1D(cos_a, eps, 1, one, (0, 0), M))
        errs.append(np.max(np.abs(sol(xs) - exact)))
    assert errs[1] < 0.3 * errs[0] and errs[1] < 1e-5


def test_energy_identity_and_bound():
    eps = 1 / 8
    f = lambda x: 1 + x
    p = Dirichlet1D(cos_a, eps, 2, f, (0, 0, 0, 0), 256)
    sol = solvers.solve_dirichlet_1d(p)
    pts = (np.arange(p.M)[:, None] + solvers.GAUSS2) / p.M
    energy = np.sum(0.5 / p.M * cos_a(pts / eps) * sol(pts, 2) ** 2)
    xq = (np.arange(p.M)[:, None] + solvers.GAUSS6) / p.M
    work = np.sum(solvers.GAUSS6_W / p.M * f(xq) * sol(xq))
    assert energy == pytest.approx(work, rel=1e-10)
    # coercivity (a >= 1) with Poincare-type bound ||u''|| <= ||f||_{H^-2} via the energy
    assert np.sum(0.5 / p.M * sol(pts, 2) ** 2) <= energy


def test_certified_solve():
    p = Dirichlet1D(cos_a, 1 / 8, 2, lambda x: 1 + x, (0, 1, 0, -1), 128)
    sol, cert = solvers.certified_dirichlet_1d(p, 1e-3, lambda s: np.max(np.abs(s.nodal[0])))
    assert cert["ok"] and cert["rel_diff"] < 1e-3 and sol.M == cert["M"]


def test_dirichlet_validation():
    with pytest.raises(ResolutionError):
        Dirichlet1D(cos_a, 1 / 8, 2, one, (0, 0, 0, 0), 64)
    with pytest.raises(ValidationError):
        Dirichlet1D(cos_a, 1 / 8, 3, one, (0,) * 6, 256)
    with pytest.raises(ValidationError):
        Dirichlet1D(cos_a, 1 / 8, 2, one, (0, 0), 256)
    with pytest.raises(SolverError):
        solvers.solve_dirichlet_1d(Dirichlet1D(lambda y: np.cos(2 * np.pi * y), 1 / 4, 1, one, (0, 0), 64))


def test_homogenized_dirichlet_uses_constant():
    hom = solvers.solve_homogenized(np.array([[[[SQRT3]]]]),
                                    Dirichlet1D(cos_a, 1 / 8, 2, one, (0, 0, 0, 0), 128), 2)
    x = np.linspace(0, 1, 129)
    np.testing.assert_allclose(hom.nodal[0], x**2 * (1 - x) ** 2 / (24 * SQRT3), atol=1e-14)


def test_caccioppoli_stable_under_refinement():
    vals = []
    for M in (1024, 2048):
        sol = solvers.solve_dirichlet_1d(Dirichlet1D(cos_a, 1 / 16, 2, None, (0, 1, 1, 0), M))
        x = np.linspace(0, 1, 4097)
        vals.append(rates.caccioppoli_constant(sol.sample(x), 2, 0.5, 0.25))
    assert np.isfinite(vals[0]) and abs(vals[1] / vals[0] - 1) < 1e-3


# -- torus -----------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2])
def test_periodic_constant_oracle(m):
    N = 64
    x = np.arange(N) / N
    f = GridFunction(np.sin(2 * np.pi * x))
    u = solvers.solve_periodic(PeriodicProblem(coeffs.constant(3.0, 16, m=m), 1 / 4, f, N))
    np.testing.assert_allclose(u.values[0], np.sin(2 * np.pi * x) / (3.0 * (2 * np.pi) ** (2 * m)), atol=1e-13)


def test_periodic_cosine_oracle():
    eps, N = 1 / 4, 256
    x = np.arange(N) / N
    A = coeffs.sample("cosine_1d", 64, m=1)
    u = solvers.solve_periodic(PeriodicProblem(A, eps, GridFunction(np.sin(2 * np.pi * x)), N), tol=1e-12)
    a = cos_a(x / eps)
    # -(a u')' = sin 2 pi x  =>  a u' = cos(2 pi x)/(2 pi) + C with u' of zero mean
    F = np.cos(2 * np.pi * x) / (2 * np.pi)
    C = -np.mean(F / a) / np.mean(1 / a)
    du = torus(1, N).derivative(u.values[0], (1,))
    np.testing.assert_allclose(du, (F + C) / a, atol=1e-8)


def test_periodic_validation():
    f = GridFunction(np.sin(2 * np.pi * np.arange(64) / 64))
    A = coeffs.constant(1.0, 16)
    with pytest.raises(ValidationError):
        PeriodicProblem(A, 0.3, f, 64)
    with pytest.raises(ResolutionError):
        PeriodicProblem(A, 1 / 8, f, 64)
    with pytest.raises(ValidationError):
        PeriodicProblem(A, 1 / 4, GridFunction(np.ones(64)), 64)


def test_homogenized_laminate_2d():
    N = 16
    y = np.arange(N) / N
    X, Y = np.meshgrid(y, y, indexing="ij")
    f = GridFunction((np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y))[None])
    A_bar = np.zeros((2, 2, 1, 1))
    A_bar[0, 0, 0, 0], A_bar[1, 1, 0, 0] = SQRT3, 2.0
    u = solvers.solve_homogenized(A_bar, f, 1)
    np.testing.assert_allclose(u.values[0], f.values[0] / ((SQRT3 + 2) * (2 * np.pi) ** 2), atol=1e-14)


def test_homogenized_zero_load_and_noncoercive():
    f = GridFunction(np.zeros(16))
    assert np.all(solvers.solve_homogenized(np.ones((1, 1, 1, 1)), f, 2).values == 0)
    g = GridFunction(np.sin(2 * np.pi * np.arange(16) / 16))
    with pytest.raises(SolverError):
        solvers.solve_homogenized(-np.ones((1, 1, 1, 1)), g, 1)
    with pytest.raises(ValidationError):
        solvers.solve_homogenized(np.ones((2, 2, 1, 1)), g, 1)


# -- kernel solutions ------------------------------------------------------------

def test_kernel_constant_coefficient_is_polynomial():
    c1, c2, c3, c4 = 0.3, 1.0, 0.5, 0.2
    u = solvers.exact_kernel_solution_1d(lambda y: np.ones_like(y), 1 / 8, 2, (c1, c2, c3, c4))
    x, lo = u.nodes()[0], -1.0
    exact = c4 + c3 * (x - lo) + c1 * (x - lo) ** 2 / 2 + c2 * (x * (x * x - lo * lo) / 2 - (x**3 - lo**3) / 3)
    np.testing.assert_allclose(u.values[0], exact, atol=1e-12)
    np.testing.assert_allclose(u.derivatives[2][0], c1 + c2 * x, atol=1e-14)


def test_kernel_first_order_mean_slope():
    eps = 1 / 16
    u = solvers.exact_kernel_solution_1d(cos_a, eps, 1, (1.0, 0.0))
    slope = (u.values[0, -1] - u.values[0, 0]) / 2.0
    assert slope == pytest.approx(1 / SQRT3, abs=1e-12)


def test_kernel_validation():
    with pytest.raises(ValidationError):
        solvers.exact_kernel_solution_1d(cos_a, 1 / 8, 2, (1, 0))
    with pytest.raises(ResolutionError):
        solvers.exact_kernel_solution_1d(cos_a, 1 / 8, 1, (1, 0), nodes_per_period=16)
