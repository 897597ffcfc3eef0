"""Periodic cell problems: correctors, homogenized tensor, flux, dual correctors.

Array layouts (``P`` = number of order-m multi-indices, grid axes last):

* ``chi[gamma, l, j]``          corrector chi^gamma_{lj}
* ``A_bar[alpha, beta, i, j]``  homogenized tensor
* ``B[alpha, beta, i, j]``      flux field
* ``dualB[gamma, alpha, beta, i, j]``  dual correctors, antisymmetric in (gamma, alpha)
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .coeffs import CoefficientField
from .errors import SolverError, ValidationError
from .multiindex import as_multiindex, enumerate_multiindices, index_of
from .spectral import EllipticOperator, GridFunction, adjoint_tensor, torus

DEFAULT_TOL = 1e-9
CACHE_MAGIC = b"H2MC"
CACHE_VERSION = 1


def default_max_iter(N: int, d: int) -> int:
    return int(10 * N ** (d / 2))


@dataclass
class CorrectorSet:
    d: int
    m: int
    n: int
    N: int
    chi: np.ndarray
    chi_star: np.ndarray
    A_bar: np.ndarray
    B: np.ndarray
    dualB: np.ndarray
    residuals: dict = field(default_factory=dict)

    @property
    def alphas(self):
        return enumerate_multiindices(self.d, self.m)

    def corrector(self, gamma, j: int, adjoint: bool = False) -> GridFunction:
        src = self.chi_star if adjoint else self.chi
        return GridFunction(src[index_of(gamma), :, j], zero_mean=True)

    def flux_identity_residual(self) -> float:
        """max over (beta,i,j) of ||sum_alpha D^alpha B^{alpha beta}_ij|| / ||B||."""
        g = torus(self.d, self.N)
        scale = max(float(np.sqrt(np.mean(self.B**2))), 1e-300)
        worst = 0.0
        for b in range(len(self.alphas)):
            div = sum(g.derivative(self.B[a, b], al) for a, al in enumerate(self.alphas))
            worst = max(worst, float(np.sqrt(np.mean(g.project(div) ** 2))) / scale)
        return worst


def _check(A: CoefficientField):
    if not isinstance(A, CoefficientField):
        raise ValidationError("expected a CoefficientField")


def corrector_rhs(op: EllipticOperator, gamma_idx: int, j: int) -> np.ndarray:
    """-sum_alpha (D^alpha)^* A^{alpha gamma}_{.j}: the load of the cell problem for (gamma, j)."""
    return -op.grid.project(op.divergence(op.grid.truncate(op.coef[:, gamma_idx, :, j])))


def solve_corrector(A: CoefficientField, gamma, j: int, tol: float = DEFAULT_TOL,
                    max_iter: int | None = None, dealias: bool = False) -> GridFunction:
    """Zero-mean periodic chi^gamma_j; the solve info is attached as ``.info``."""
    _check(A)
    gamma = as_multiindex(gamma)
    if gamma.order != A.m or gamma.d != A.d:
        raise ValidationError(f"gamma={gamma} must have order m={A.m} in d={A.d}")
    if not 0 <= j < A.n:
        raise ValidationError(f"component j={j} out of range")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    op = EllipticOperator(A.values, A.m, torus(A.d, A.N, dealias))
    max_iter = max_iter or default_max_iter(A.N, A.d)
    u, info = op.solve(corrector_rhs(op, index_of(gamma), j), tol, max_iter)
    gf = GridFunction(u, zero_mean=True)
    gf.info = info
    return gf


def _solve_family(A: CoefficientField, values, tol, max_iter, dealias, label):
    op = EllipticOperator(values, A.m, torus(A.d, A.N, dealias))
    alphas = enumerate_multiindices(A.d, A.m)
    chi = np.zeros((len(alphas), A.n, A.n) + (A.N,) * A.d)
    residuals = {}
    for g, gamma in enumerate(alphas):
        for j in range(A.n):
            try:
                u, info = op.solve(corrector_rhs(op, g, j), tol, max_iter)
            except SolverError as exc:
                raise type(exc)(f"{label} corrector gamma={gamma.components}, j={j}: {exc}") from exc
            chi[g, :, j] = u
            residuals[(label, gamma.components, j)] = info["residual"]
    return chi, residuals


def solve_all(A: CoefficientField, tol: float = DEFAULT_TOL, max_iter: int | None = None,
              dealias: bool = False) -> CorrectorSet:
    _check(A)
    max_iter = max_iter or default_max_iter(A.N, A.d)
    chi, res = _solve_family(A, A.values, tol, max_iter, dealias, "chi")
    if A.symmetric:
        chi_star, res_star = chi.copy(), {("chi_star",) + k[1:]: v for k, v in res.items()}
    else:
        chi_star, res_star = _solve_family(A, adjoint_tensor(A.values), tol, max_iter, dealias,
                                           "chi_star")
    A_bar = homogenized_tensor(A, chi)
    B = flux_field(A, chi, A_bar)
    dualB, dual_res = dual_correctors(B, A.d, A.m, scale=float(np.max(np.abs(A_bar))))
    residuals = {**res, **res_star, "dual_divergence": dual_res}
    return CorrectorSet(A.d, A.m, A.n, A.N, chi, chi_star, A_bar, B, dualB, residuals)


def _corrector_gradients(chi: np.ndarray, d: int, m: int) -> np.ndarray:
    """Dchi[gamma, beta, l, j] = D^gamma chi^beta_{lj}."""
    g = torus(d, chi.shape[-1])
    return g.derivatives(chi, enumerate_multiindices(d, m))


def _effective_integrand(A_values, chi, d, m):
    if chi.shape[-d:] != A_values.shape[-d:]:
        raise ValidationError("corrector and coefficient grids differ")
    dchi = _corrector_gradients(chi, d, m)
    return A_values + np.einsum("agil...,gblj...->abij...", A_values, dchi)


def homogenized_tensor(A: CoefficientField, chi: np.ndarray) -> np.ndarray:
    """Cell average of A^{ab}_{ij} + sum_gamma A^{a gamma}_{il} D^gamma chi^b_{lj}."""
    axes = tuple(range(4, 4 + A.d))
    return _effective_integrand(A.values, chi, A.d, A.m).mean(axis=axes)


def flux_field(A: CoefficientField, chi: np.ndarray, A_bar: np.ndarray) -> np.ndarray:
    integrand = _effective_integrand(A.values, chi, A.d, A.m)
    return integrand - A_bar.reshape(A_bar.shape + (1,) * A.d)


def dual_correctors(B: np.ndarray, d: int, m: int, mean_tol: float = 1e-10, scale: float | None = None):
    """Potentials with antisymmetry in (gamma, alpha) and sum_gamma D^gamma dualB^{gamma alpha beta} = B^{alpha beta}.

    Solves sum_gamma D^gamma D^gamma b = B diagonally in Fourier space and sets
    dualB^{gamma alpha beta} = D^gamma b^{alpha beta} - D^alpha b^{gamma beta}.

    Parameters
    ----------
    B : ndarray, shape (P, P, n, n, *grid)
        Zero-mean flux field.
    scale : float, optional
        Flux magnitude used to floor the residual denominator (max |A_bar| in
        :func:`solve_all`).  Without it, a flux that vanishes analytically
        (every 1D instance) but carries roundoff makes the relative residual
        a ratio of two rounding errors.

    Returns
    -------
    dualB : ndarray, shape (P, P, P, n, n, *grid)
    residual : float
        Relative L2 residual of the divergence identity.
    """
    g = torus(d, B.shape[-1])
    peak = float(np.max(np.abs(B))) if B.size else 0.0
    means = B.mean(axis=tuple(range(4, 4 + d)))
    if np.max(np.abs(means)) > mean_tol * max(peak, scale or 0.0, 1.0):
        raise ValidationError(f"flux field has nonzero mean {np.max(np.abs(means)):.3e}")
    dualB = dual_from_potential(dual_potential(B, d, m), d, m)
    return dualB, dual_divergence_residual(dualB, B, d, m, scale)


def dual_potential(B: np.ndarray, d: int, m: int) -> np.ndarray:
    """Zero-mean b with sum_gamma D^gamma D^gamma b = B (Nyquist-free part)."""
    g = torus(d, B.shape[-1])
    # sum_gamma D^gamma D^gamma has symbol (-1)^m (2 pi)^{2m} sum xi^{2 gamma}
    denom = np.where(g.active, (-1) ** m * g.polyharmonic_symbol(m), 1.0)
    return g.ifft(g.fft(B) * g.active / denom)


def dual_from_potential(b: np.ndarray, d: int, m: int) -> np.ndarray:
    g = torus(d, b.shape[-1])
    Db = g.derivatives(b, enumerate_multiindices(d, m))  # [gamma, alpha, beta, i, j]
    return Db - np.swapaxes(Db, 0, 1)


def dual_divergence_residual(dualB, B, d, m, scale: float | None = None) -> float:
    g = torus(d, B.shape[-1])
    alphas = enumerate_multiindices(d, m)
    denom = max(float(np.sqrt(np.mean(B**2))), scale or 0.0)
    worst = 0.0
    for a in range(len(alphas)):
        div = sum(g.derivative(dualB[c, a], gam) for c, gam in enumerate(alphas))
        worst = max(worst, float(np.sqrt(np.mean((div - B[a]) ** 2))))
    if denom == 0.0:
        return worst
    return worst / denom


# -- binary cache -------------------------------------------------------------

def save_cache(path, cs: CorrectorSet) -> None:
    """Write the H2MC corrector cache atomically."""
    header = CACHE_MAGIC + struct.pack("<5I", CACHE_VERSION, cs.d, cs.m, cs.n, cs.N)
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (cs.chi, cs.chi_star, cs.A_bar, cs.B, cs.dualB)
    )
    atomic_write(path, header + body)


def load_cache(path) -> CorrectorSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CACHE_MAGIC:
        raise ValidationError(f"{path}: not a corrector cache")
    version, d, m, n, N = struct.unpack("<5I", raw[4:24])
    if version != CACHE_VERSION:
        raise ValidationError(f"{path}: unsupported cache version {version}")
    P = len(enumerate_multiindices(d, m))
    grid = (N,) * d
    shapes = [(P, n, n) + grid, (P, n, n) + grid, (P, P, n, n), (P, P, n, n) + grid,
              (P, P, P, n, n) + grid]
    arrays, off = [], 24
    for shp in shapes:
        size = int(np.prod(shp))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shp).copy())
        off += 8 * size
    if off != len(raw):
        raise ValidationError(f"{path}: cache size mismatch")
    return CorrectorSet(d, m, n, N, *arrays)


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
