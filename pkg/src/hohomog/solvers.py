"""Forward solvers: L_eps and L_0 on the torus, the 1D Dirichlet problem for
m in {1, 2}, and explicit 1D solutions of L_eps u = 0.

The 1D finite element spaces are the standard conforming ones (continuous P1
for m = 1, C^1 Hermite cubics for m = 2), but they are parametrised by the
m-th derivative ``q = u^(m)`` instead of nodal values.  For m = 2, ``q`` is
discontinuous piecewise linear and

    u(x) = u(0) + u'(0) x + int_0^x (x - s) q(s) ds,

so the boundary values at x = 1 become two linear constraints on ``q``.  With
two-point Gauss quadrature of a(x/eps) the stiffness matrix is diagonal in the
Lagrange basis at the Gauss points, and the KKT system reduces to a 2x2 Schur
complement.  The discrete solution is the same Galerkin solution as the nodal
Hermite assembly, without its O(h^-4) conditioning.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .cellproblem import default_max_iter
from .coeffs import CoefficientField
from .errors import ResolutionError, SolverError, ValidationError
from .multiindex import enumerate_multiindices
from .spectral import EllipticOperator, GridFunction, torus

GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
GAUSS6 = 0.5 * (_GL_X + 1.0)
GAUSS6_W = 0.5 * _GL_W


# -- torus --------------------------------------------------------------------

@dataclass
class PeriodicProblem:
    """L_eps u = f on the unit torus with coefficients A(x/eps), 1/eps an integer."""

    A: CoefficientField
    eps: float
    f: GridFunction
    N_f: int | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValidationError("eps must lie in (0, 1]")
        periods = 1.0 / self.eps
        if abs(periods - round(periods)) > 1e-9:
            raise ValidationError(f"1/eps must be an integer, got eps={self.eps}")
        if self.f.domain != "torus" or self.f.d != self.A.d:
            raise ValidationError("load must be a torus GridFunction of the coefficient's dimension")
        if self.f.n_components != self.A.n:
            raise ValidationError("load has the wrong number of components")
        self.N_f = self.N_f or self.f.N
        if self.f.N != self.N_f:
            raise ValidationError("load is not sampled on the fine grid")
        if self.N_f * self.eps < 16 - 1e-9:
            raise ResolutionError(f"fine grid N_f={self.N_f} under-resolves eps={self.eps} (need N_f >= 16/eps)")
        scale = max(float(np.max(np.abs(self.f.values))), 1e-300)
        if np.max(np.abs(self.f.mean())) > 1e-12 * scale:
            raise ValidationError("periodic load must have zero mean")


def solve_periodic(p: PeriodicProblem, tol: float = 1e-10, max_iter: int | None = None) -> GridFunction:
    """Zero-mean u_eps; the Krylov certificate is attached as ``.info``."""
    A = p.A
    coef = A.rescaled(p.eps, p.N_f)
    op = EllipticOperator(coef, A.m, torus(A.d, p.N_f))
    u, info = op.solve(p.f.values, tol, max_iter or default_max_iter(p.N_f, A.d))
    out = GridFunction(u)
    out.info = info
    return out


def solve_homogenized(A_bar: np.ndarray, f, m: int, N: int | None = None):
    """Solve L_0 u = f.

    Torus loads (GridFunction) are solved exactly mode by mode.  A
    :class:`Dirichlet1D` problem is solved with the same finite elements as
    the oscillating problem, after replacing a by the scalar A_bar.
    """
    A_bar = np.asarray(A_bar, dtype=float)
    if isinstance(f, Dirichlet1D):
        if A_bar.size != 1:
            raise ValidationError("the 1D Dirichlet solver is scalar")
        abar = float(A_bar.ravel()[0])
        if abar <= 0:
            raise SolverError(f"homogenized coefficient {abar} is not coercive")
        hom = Dirichlet1D(lambda y: np.full(np.shape(y), abar), None, f.m, f.f, f.bc, f.M)
        return solve_dirichlet_1d(hom)
    if not isinstance(f, GridFunction) or f.domain != "torus":
        raise ValidationError("load must be a torus GridFunction or a Dirichlet1D problem")
    d = f.d
    alphas = enumerate_multiindices(d, m)
    P, n = len(alphas), f.n_components
    if A_bar.shape != (P, P, n, n):
        raise ValidationError(f"A_bar has shape {A_bar.shape}, expected {(P, P, n, n)}")
    scale = max(float(np.max(np.abs(f.values))), 1e-300)
    if np.max(np.abs(f.mean())) > 1e-12 * scale:
        raise ValidationError("periodic load must have zero mean")
    g = torus(d, f.N)
    S = np.zeros(g.spectral_shape + (n, n), dtype=complex)
    for a, al in enumerate(alphas):
        for b, be in enumerate(alphas):
            S += (g.symbol(al) * g.symbol(be))[..., None, None] * A_bar[a, b]
    S *= (-1) ** m
    fh = np.moveaxis(g.fft(f.values), 0, -1)
    active = g.active
    Sa = S[active]
    # coercivity on each block: the Hermitian part must be positive definite
    herm = 0.5 * (Sa + np.conj(np.swapaxes(Sa, -1, -2)))
    lam = np.linalg.eigvalsh(herm)[..., 0]
    ref = g.polyharmonic_symbol(m)[active]
    if np.any(lam <= 1e-12 * ref * max(np.max(np.abs(A_bar)), 1e-300)):
        raise SolverError("homogenized symbol block is singular or indefinite (A_bar not coercive)")
    uh = np.zeros_like(fh)
    uh[active] = np.linalg.solve(Sa, fh[active][..., None])[..., 0]
    return GridFunction(g.ifft(np.moveaxis(uh, -1, 0)))


# -- 1D Dirichlet -------------------------------------------------------------

def scalar_coefficient(A) -> Callable:
    """a(y) for a 1D scalar CoefficientField or a plain callable."""
    if isinstance(A, CoefficientField):
        if A.d != 1 or A.n != 1 or A.P != 1:
            raise ValidationError("the 1D Dirichlet solver needs a scalar 1D coefficient")
        return lambda y: A.at([np.asarray(y, dtype=float)])[0, 0, 0, 0]
    if callable(A):
        return A
    raise ValidationError("coefficient must be a CoefficientField or a callable")


@dataclass
class Dirichlet1D:
    """(-1)^m (a(x/eps) u^(m))^(m) = f on (0, 1) with endpoint jets.

    ``bc`` is (u(0), u(1)) for m = 1 and (u(0), u'(0), u(1), u'(1)) for m = 2.
    ``eps=None`` marks a non-oscillating coefficient a(x).  ``M`` is the number
    of elements.
    """

    a: Callable
    eps: float | None
    m: int
    f: Callable | None
    bc: tuple
    M: int
    mu: float | None = None

    def __post_init__(self):
        self.a = scalar_coefficient(self.a)
        if self.m not in (1, 2):
            raise ValidationError("the 1D Dirichlet solver supports m = 1 and m = 2")
        if len(self.bc) != 2 * self.m:
            raise ValidationError(f"m={self.m} needs {2 * self.m} boundary values")
        if self.M < 4:
            raise ValidationError("need at least 4 elements")
        if self.eps is not None:
            if self.eps <= 0:
                raise ValidationError("eps must be positive")
            if self.h > self.eps / 16 * (1 + 1e-12):
                raise ResolutionError(f"h={self.h:.3g} > eps/16={self.eps / 16:.3g}")

    @property
    def h(self) -> float:
        return 1.0 / self.M

    def coefficient(self, x):
        y = x if self.eps is None else np.asarray(x) / self.eps
        return self.a(y)

    def refined(self, factor: int = 2) -> "Dirichlet1D":
        return Dirichlet1D(self.a, self.eps, self.m, self.f, self.bc, self.M * factor, self.mu)


@dataclass
class Solution1D:
    """Discrete solution of a :class:`Dirichlet1D` problem.

    ``q`` holds u^(m) at the two Gauss points of each element (m = 2) or the
    constant u' per element (m = 1); ``nodal`` holds u and u' at the nodes.
    """

    m: int
    M: int
    q: np.ndarray
    nodal: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def h(self):
        return 1.0 / self.M

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise ValidationError("evaluation points must lie in [0, 1]")
        e = np.clip(np.floor(x * self.M).astype(int), 0, self.M - 1)
        return e, np.clip(x - e * self.h, 0.0, self.h)

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        """u^(deriv)(x), exact within each element."""
        e, t = self._locate(x)
        h = self.h
        u0 = self.nodal[0][e]
        if self.m == 1:
            if deriv == 0:
                return u0 + self.q[e] * t
            return self.q[e] if deriv == 1 else np.zeros_like(t)
        du0 = self.nodal[1][e]
        g0, g1 = GAUSS2
        qa, qb = self.q[e, 0], self.q[e, 1]
        slope = (qb - qa) / ((g1 - g0) * h)
        qL = qa - slope * g0 * h
        if deriv == 0:
            return u0 + du0 * t + qL * t**2 / 2 + slope * t**3 / 6
        if deriv == 1:
            return du0 + qL * t + slope * t**2 / 2
        if deriv == 2:
            return qL + slope * t
        if deriv == 3:
            return slope
        return np.zeros_like(t)

    def sample(self, x, derivs=None) -> GridFunction:
        """Interval GridFunction on uniform nodes ``x`` carrying exact derivative samples."""
        x = np.asarray(x, dtype=float)
        derivs = range(1, self.m + 1) if derivs is None else derivs
        return GridFunction(self(x)[None], domain="interval", lo=float(x[0]),
                            spacing=float(x[1] - x[0]),
                            derivatives={k: self(x, k)[None] for k in derivs})

    def energy_difference(self, other: "Solution1D", a_of_x: Callable) -> float:
        """(int a (u^(m) - v^(m))^2)^(1/2), on the finer of the two meshes."""
        fine = self if self.M >= other.M else other
        if fine.M % min(self.M, other.M):
            raise ValidationError("meshes are not nested")
        pts = (np.arange(fine.M)[:, None] + GAUSS2[None, :]) / fine.M
        wts = 0.5 / fine.M
        diff = self(pts, self.m) - other(pts, other.m)
        return float(np.sqrt(np.sum(wts * a_of_x(pts) * diff**2)))


def _load_integrals(f: Callable, M: int):
    """Nodal tails G0(x_i) = int_{x_i}^1 f and G1(x_i) = int_{x_i}^1 x f."""
    h = 1.0 / M
    xq = (np.arange(M)[:, None] + GAUSS6[None, :]) * h
    fq = f(xq)
    e0 = h * fq @ GAUSS6_W
    e1 = h * (xq * fq) @ GAUSS6_W
    G0 = np.concatenate([np.cumsum(e0[::-1])[::-1], [0.0]])
    G1 = np.concatenate([np.cumsum(e1[::-1])[::-1], [0.0]])
    return G0, G1


def _tails_at(f: Callable, s: np.ndarray, M: int, G0, G1):
    """G0(s), G1(s) for points s strictly inside elements (same shape as s)."""
    h = 1.0 / M
    e = np.clip(np.floor(s / h).astype(int), 0, M - 1)
    right = (e + 1) * h
    length = right - s
    xq = s[..., None] + length[..., None] * GAUSS6
    fq = f(xq)
    p0 = length * (fq @ GAUSS6_W)
    p1 = length * ((xq * fq) @ GAUSS6_W)
    return G0[e + 1] + p0, G1[e + 1] + p1


def solve_dirichlet_1d(p: Dirichlet1D) -> Solution1D:
    M, h = p.M, p.h
    f = p.f if p.f is not None else (lambda x: np.zeros_like(x))
    G0, G1 = _load_integrals(f, M)
    if p.m == 1:
        xm = (np.arange(M) + 0.5) * h
        K = h * p.coefficient(xm)
        # l_e = int_e G0(s) ds, by 6-point Gauss on the element
        sq = (np.arange(M)[:, None] + GAUSS6[None, :]) * h
        t0, _ = _tails_at(f, sq, M, G0, G1)
        load = h * (t0 @ GAUSS6_W)
        C = np.full((1, M), h)
        r = np.array([p.bc[1] - p.bc[0]])
    else:
        xg = (np.arange(M)[:, None] + GAUSS2[None, :]) * h
        K = (0.5 * h * p.coefficient(xg)).ravel()
        sq = (np.arange(M)[:, None] + GAUSS6[None, :]) * h
        t0, t1 = _tails_at(f, sq, M, G0, G1)
        ftilde = t1 - sq * t0
        # Lagrange basis at the two Gauss points, evaluated at the 6 load points
        g0, g1 = GAUSS2
        psi0 = (GAUSS6 - g1) / (g0 - g1)
        psi1 = (GAUSS6 - g0) / (g1 - g0)
        load = h * np.stack([(ftilde * psi0 * GAUSS6_W).sum(1), (ftilde * psi1 * GAUSS6_W).sum(1)], 1)
        load = load.ravel()
        w = np.full(2 * M, 0.5 * h)
        C = np.stack([w, w * (1.0 - xg.ravel())])
        u0, du0, u1, du1 = p.bc
        r = np.array([du1 - du0, u1 - u0 - du0])
    if np.any(K <= 0):
        raise SolverError("non-positive coefficient sample: stiffness is singular")
    Kinv_l = load / K
    Kinv_Ct = C.T / K[:, None]
    schur = C @ Kinv_Ct
    lam = np.linalg.solve(schur, r - C @ Kinv_l)
    q = Kinv_l + Kinv_Ct @ lam
    resid = K * q - load - C.T @ lam
    scale = max(np.linalg.norm(load) + np.linalg.norm(C.T @ lam), 1e-300)
    info = {
        "weak_residual": float(np.linalg.norm(resid) / scale),
        "constraint_residual": float(np.max(np.abs(C @ q - r))),
        "M": M,
        "schur_cond": float(np.linalg.cond(schur)),
    }
    if p.m == 1:
        u = p.bc[0] + np.concatenate([[0.0], np.cumsum(h * q)])
        return Solution1D(1, M, q, np.stack([u, np.zeros_like(u)]), info)
    qe = q.reshape(M, 2)
    du = p.bc[1] + np.concatenate([[0.0], np.cumsum(0.5 * h * qe.sum(1))])
    inc = 0.5 * h * (qe @ (h - h * GAUSS2))
    u = p.bc[0] + np.concatenate([[0.0], np.cumsum(h * du[:-1] + inc)])
    return Solution1D(2, M, qe, np.stack([u, du]), info)


def certified_dirichlet_1d(p: Dirichlet1D, rtol: float, measure: Callable[[Solution1D], object],
                           max_M: int = 2**17) -> tuple[Solution1D, dict]:
    """Halve h until every quantity returned by ``measure`` agrees with the
    half-h solve to relative precision ``rtol``.

    Returns the finer solve and its certificate.
    """
    vc = np.atleast_1d(np.asarray(measure(solve_dirichlet_1d(p)), dtype=float))
    while True:
        if p.M * 2 > max_M:
            raise ResolutionError(f"discretisation certificate not reached with M <= {max_M}")
        p = p.refined(2)
        nxt = solve_dirichlet_1d(p)
        vn = np.atleast_1d(np.asarray(measure(nxt), dtype=float))
        rel = float(np.max(np.abs(vc - vn) / np.maximum(np.abs(vn), 1e-300)))
        if rel < rtol:
            cert = {"M": p.M, "coarse": vc.tolist(), "fine": vn.tolist(), "rel_diff": rel, "ok": True}
            return nxt, cert
        vc = vn


# -- explicit kernel solutions ------------------------------------------------

def exact_kernel_solution_1d(a, eps: float, m: int, constants, lo: float = -1.0, hi: float = 1.0,
                             nodes_per_period: int = 256, min_nodes_per_period: int = 64) -> GridFunction:
    """Solution of L_eps u = 0 on [lo, hi] by quadrature.

    m = 1: a(x/eps) u' = c1, u(lo) = c2.
    m = 2: a(x/eps) u'' = c1 + c2 x, u'(lo) = c3, u(lo) = c4.

    Returned values carry exact derivative samples of orders 1..m.
    """
    a = scalar_coefficient(a)
    if m not in (1, 2):
        raise ValidationError("kernel solutions implemented for m = 1, 2")
    c = tuple(float(v) for v in constants)
    if len(c) != 2 * m:
        raise ValidationError(f"need {2 * m} constants for m={m}")
    if nodes_per_period < min_nodes_per_period:
        raise ResolutionError(f"quadrature needs >= {min_nodes_per_period} nodes per eps-period")
    n = int(np.ceil((hi - lo) / eps * nodes_per_period))
    n += n % 2  # even number of intervals, so Simpson is exact at even nodes
    x = np.linspace(lo, hi, n + 1)
    hx = x[1] - x[0]
    ax = a(x / eps)
    if np.any(ax <= 0):
        raise ValidationError("coefficient must be positive")
    if m == 1:
        d1 = c[0] / ax
        u = c[1] + kernels.cumulative_simpson(d1, hx)
        derivs = {1: d1[None]}
    else:
        d2 = (c[0] + c[1] * x) / ax
        d1 = c[2] + kernels.cumulative_simpson(d2, hx)
        u = c[3] + kernels.cumulative_simpson(d1, hx)
        derivs = {1: d1[None], 2: d2[None]}
    return GridFunction(u[None], domain="interval", lo=lo, spacing=hx, derivatives=derivs)
