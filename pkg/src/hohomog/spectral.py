"""Grid functions, Fourier differentiation on the unit torus, and the
preconditioned Krylov solve shared by the cell and fine-scale problems.

The discrete space on an ``N^d`` torus grid is the span of Fourier modes with
every ``|xi_k| < N/2``.  Nyquist modes are projected out of every derivative so
that ``D^alpha`` is exactly (anti)self-adjoint on real fields; this keeps the
assembled operator symmetric whenever the coefficient is.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .errors import CoercivityError, ConvergenceError, ValidationError
from .multiindex import MultiIndex, as_multiindex, enumerate_multiindices, symbol_array

DOMAINS = ("torus", "interval", "line")


@dataclass
class GridFunction:
    """Samples of an ``n``-component field.

    ``values`` has shape ``(n_components, *grid)``.  Torus functions live on
    the nodes ``k/N`` of ``[0,1)^d``; interval and line functions (1D only)
    live on uniform nodes ``lo + k*spacing`` including both end points.  For
    interval functions, ``derivatives[k]`` may hold exact samples of the k-th
    derivative; norms prefer those over difference quotients.
    """

    values: np.ndarray
    domain: str = "torus"
    lo: float = 0.0
    spacing: float | None = None
    derivatives: dict[int, np.ndarray] = field(default_factory=dict)
    zero_mean: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim < 2:
            self.values = self.values[None, ...]
        if self.domain not in DOMAINS:
            raise ValidationError(f"unknown domain {self.domain!r}")
        if self.domain == "torus":
            if len(set(self.values.shape[1:])) != 1:
                raise ValidationError("torus grids must be N^d")
            self.spacing = 1.0 / self.values.shape[1]
        else:
            if self.d != 1:
                raise ValidationError("interval/line functions are one-dimensional")
            if self.spacing is None:
                self.spacing = 1.0 / (self.values.shape[1] - 1)
        if self.zero_mean:
            scale = max(float(np.max(np.abs(self.values))), 1e-300)
            if np.max(np.abs(self.mean())) > 1e-12 * scale:
                raise ValidationError("zero_mean flag set on a field with nonzero mean")

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def n_components(self) -> int:
        return self.values.shape[0]

    @property
    def periodic(self) -> bool:
        return self.domain == "torus"

    def nodes(self) -> list[np.ndarray]:
        if self.periodic:
            y = np.arange(self.N) / self.N
            return list(np.meshgrid(*([y] * self.d), indexing="ij"))
        return [self.lo + self.spacing * np.arange(self.N)]

    def weights(self) -> np.ndarray:
        """Quadrature weights: uniform on the torus, trapezoidal otherwise."""
        if self.periodic:
            return np.full(self.values.shape[1:], self.spacing**self.d)
        w = np.full(self.N, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def mean(self) -> np.ndarray:
        w = self.weights()
        axes = tuple(range(1, self.values.ndim))
        return np.sum(self.values * w, axis=axes) / np.sum(w)

    def with_values(self, values, **kw) -> "GridFunction":
        args = dict(domain=self.domain, lo=self.lo, spacing=self.spacing)
        args.update(kw)
        return GridFunction(values, **args)


@lru_cache(maxsize=32)
def torus(d: int, N: int, dealias: bool = False) -> "Torus":
    return Torus(d, N, dealias)


class Torus:
    """Fourier machinery on the ``N^d`` periodic grid of ``[0,1)^d``."""

    def __init__(self, d: int, N: int, dealias: bool = False):
        if N < 4 or N % 2:
            raise ValidationError(f"grid resolution must be even and >= 4, got {N}")
        self.d, self.N, self.dealias = d, N, dealias
        self.shape = (N,) * d
        full = np.fft.fftfreq(N, 1.0 / N)
        half = np.fft.rfftfreq(N, 1.0 / N)
        axes = [full] * (d - 1) + [half]
        self.freqs = [
            a.reshape([-1 if k == j else 1 for k in range(d)]) for j, a in enumerate(axes)
        ]
        interior = np.ones(self.spectral_shape, dtype=bool)
        for f in self.freqs:
            interior &= np.abs(f) < N / 2
        self.interior = interior
        active = interior.copy()
        active[(0,) * d] = False
        self.active = active
        if dealias:
            keep = np.ones(self.spectral_shape, dtype=bool)
            for f in self.freqs:
                keep &= np.abs(f) <= N // 3
            self.dealias_mask = keep

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.d - 1) + (self.N // 2 + 1,)

    def _axes(self, v):
        return tuple(range(v.ndim - self.d, v.ndim))

    def fft(self, v: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(v, axes=self._axes(v))

    def ifft(self, vh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(vh, s=self.shape, axes=self._axes(vh))

    @lru_cache(maxsize=None)
    def symbol(self, alpha: MultiIndex) -> np.ndarray:
        s = symbol_array(alpha, self.freqs)
        if alpha.order:
            s = np.where(self.interior, s, 0.0)
        return s

    def derivative(self, v: np.ndarray, alpha) -> np.ndarray:
        alpha = as_multiindex(alpha)
        if alpha.order == 0:
            return np.array(v, dtype=float, copy=True)
        return self.ifft(self.fft(v) * self.symbol(alpha))

    def derivatives(self, v: np.ndarray, alphas) -> np.ndarray:
        """Stack of ``D^alpha v`` for each alpha, sharing one forward transform."""
        vh = self.fft(v)
        return np.stack([self.ifft(vh * self.symbol(as_multiindex(a))) for a in alphas])

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the zero-mean, Nyquist-free subspace."""
        return self.ifft(self.fft(v) * self.active)

    def truncate(self, v: np.ndarray) -> np.ndarray:
        if not self.dealias:
            return v
        return self.ifft(self.fft(v) * self.dealias_mask)

    @lru_cache(maxsize=None)
    def polyharmonic_symbol(self, m: int) -> np.ndarray:
        """(2 pi)^{2m} sum_{|gamma|=m} xi^{2 gamma}, i.e. the symbol of sum_gamma (D^gamma)^* D^gamma."""
        total = np.zeros(self.spectral_shape)
        for g in enumerate_multiindices(self.d, m):
            total = total + np.abs(self.symbol(g)) ** 2
        return total

    def integrate(self, v: np.ndarray) -> np.ndarray:
        return v.mean(axis=self._axes(v))


def _symmetric(A: np.ndarray) -> bool:
    return np.array_equal(A, adjoint_tensor(A))


def adjoint_tensor(A: np.ndarray) -> np.ndarray:
    """A*^{ab}_{ij} = A^{ba}_{ji}, on arrays laid out as (alpha, beta, i, j, ...)."""
    return np.swapaxes(np.swapaxes(A, 0, 1), 2, 3)


class EllipticOperator:
    """Weak form  sum_{alpha,beta} <D^alpha v, A^{alpha beta} D^beta u>  on the torus.

    ``coef`` has shape ``(P, P, n, n, *grid)`` with ``P`` the number of order-m
    multi-indices in canonical order.
    """

    def __init__(self, coef: np.ndarray, m: int, grid: Torus):
        self.coef = np.asarray(coef, dtype=float)
        self.m, self.grid = m, grid
        self.alphas = enumerate_multiindices(grid.d, m)
        P = len(self.alphas)
        if self.coef.shape[:2] != (P, P) or self.coef.shape[4:] != grid.shape:
            raise ValidationError(
                f"coefficient shape {self.coef.shape} does not match d={grid.d}, m={m}, N={grid.N}"
            )
        self.n = self.coef.shape[2]
        self.symmetric = _symmetric(self.coef)
        self.sign = (-1) ** m
        self.precond_symbol = grid.polyharmonic_symbol(m)
        self.n_applies = 0

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """All order-m derivatives: shape (P, n, *grid)."""
        return self.grid.derivatives(u, self.alphas)

    def divergence(self, flux: np.ndarray) -> np.ndarray:
        """sum_alpha (D^alpha)^* flux_alpha, the adjoint of :meth:`gradient`."""
        g = self.grid
        fh = g.fft(flux)
        acc = np.zeros(fh.shape[1:], dtype=complex)
        for k, a in enumerate(self.alphas):
            acc += fh[k] * g.symbol(a)
        return self.sign * g.ifft(acc)

    def flux(self, grad: np.ndarray) -> np.ndarray:
        out = np.einsum("abij...,bj...->ai...", self.coef, grad)
        return self.grid.truncate(out)

    def apply(self, u: np.ndarray) -> np.ndarray:
        self.n_applies += 1
        return self.grid.project(self.divergence(self.flux(self.gradient(u))))

    def precondition(self, r: np.ndarray) -> np.ndarray:
        g = self.grid
        sym = np.where(g.active, self.precond_symbol, 1.0)
        return g.ifft(g.fft(r) * g.active / sym)

    def solve(self, b: np.ndarray, tol: float, max_iter: int, x0=None):
        """Solve ``K u = b`` on the zero-mean subspace; returns (u, info dict)."""
        b = self.grid.project(np.asarray(b, dtype=float))
        if self.symmetric:
            return pcg(self.apply, b, self.precondition, self.grid.project, tol, max_iter, x0)
        return gmres_solve(self.apply, b, self.precondition, tol, max_iter, x0)


def _dot(a, b):
    return float(np.vdot(a, b).real)


def pcg(
    apply: Callable,
    b: np.ndarray,
    precondition: Callable,
    project: Callable,
    tol: float,
    max_iter: int,
    x0=None,
):
    """Preconditioned conjugate gradients on the projected subspace.

    Convergence is measured in the dual norm of the preconditioner,
    ``sqrt(r.P^-1 r) / sqrt(b.P^-1 b)``, i.e. the weak residual tested against
    all discrete fields in the energy scale of the constant-coefficient
    operator.  A plain l2 residual of an order-2m operator has a rounding
    floor near cond(K) * 1e-16, which is above 1e-10 on fine grids for m = 2.
    """
    bnorm = np.sqrt(_dot(b, precondition(b)))
    x = np.zeros_like(b) if x0 is None else project(np.asarray(x0, dtype=float))
    if bnorm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0, "method": "pcg"}
    it = 0
    while True:
        # outer loop restarts from the true residual if recursion drifted
        r = b - apply(x) if (x0 is not None or it) else b.copy()
        z = precondition(r)
        rz = _dot(r, z)
        res = np.sqrt(max(rz, 0.0)) / bnorm
        if res <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError("PCG did not converge", res, it)
        p = z.copy()
        while res > tol and it < max_iter:
            Kp = apply(p)
            curv = _dot(p, Kp)
            if curv <= 0.0:
                raise CoercivityError(
                    f"negative curvature p.Kp={curv:.3e} at iteration {it}; coercivity likely violated"
                )
            step = rz / curv
            x += step * p
            r -= step * Kp
            z = precondition(r)
            rz_new = _dot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
            res = np.sqrt(max(rz, 0.0)) / bnorm
        x0 = x
    return project(x), {"iterations": it, "residual": res, "method": "pcg"}


def dual_residual(apply, b, x, precondition) -> float:
    r = b - apply(x)
    bn = np.sqrt(_dot(b, precondition(b)))
    return 0.0 if bn == 0 else float(np.sqrt(max(_dot(r, precondition(r)), 0.0)) / bn)


def gmres_solve(apply, b, precondition, tol, max_iter, x0=None):
    """Restarted GMRES for non-symmetric coefficients, checked in the same dual norm as :func:`pcg`."""
    shape = b.shape
    size = b.size
    if not np.any(b):
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0, "method": "gmres"}
    A = spla.LinearOperator((size, size), matvec=lambda v: apply(v.reshape(shape)).ravel())
    M = spla.LinearOperator((size, size), matvec=lambda v: precondition(v.reshape(shape)).ravel())
    count = [0]

    def cb(_):
        count[0] += 1

    x = None if x0 is None else np.ravel(x0)
    rtol = 0.5 * tol
    for _ in range(4):
        x, _info = spla.gmres(
            A, b.ravel(), x0=x, rtol=rtol, atol=0.0, restart=60,
            maxiter=max(1, max_iter // 60 + 1), M=M, callback=cb, callback_type="pr_norm",
        )
        res = dual_residual(apply, b, x.reshape(shape), precondition)
        if res <= tol or count[0] >= max_iter:
            break
        rtol *= 0.1
    if res > tol:
        raise ConvergenceError("GMRES did not converge", res, count[0])
    return x.reshape(shape), {"iterations": count[0], "residual": res, "method": "gmres"}
