"""The mollifier S_eps, its square, the boundary cutoff rho_eps, and the
reflection extension of interval functions to the line.

Base profile: ``phi(x) = c exp(-1/(1 - |2x|^2))`` on ``|x| < 1/2``.  Discrete
kernels are renormalised so that ``sum(kernel) * h^d == 1`` on the working
grid, which makes S_eps reproduce constants to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import ValidationError
from .spectral import GridFunction, torus

CUTOFF_CENTER = 3.5    # rho switches on across dist = 3.5 eps
CUTOFF_WIDTH = 0.25    # with a kernel of width eps/4


def bump(t: np.ndarray) -> np.ndarray:
    """Unnormalised profile exp(-1/(1-4t^2)) on |t| < 1/2 (t may be a radius)."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - 4.0 * t * t
    out = np.zeros_like(s)
    inside = s > 0
    out[inside] = np.exp(-1.0 / s[inside])
    return out


def bump_derivative(t: np.ndarray, k: int) -> np.ndarray:
    """k-th derivative (k <= 3) of the 1D profile."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - 4.0 * t * t
    out = np.zeros_like(s)
    ins = s > 0
    t, s = t[ins], s[ins]
    p = np.exp(-1.0 / s)
    g = -8.0 * t / s**2                              # (log phi)'
    g1 = -8.0 / s**2 - 128.0 * t * t / s**3          # (log phi)''
    g2 = -384.0 * t / s**3 - 3072.0 * t**3 / s**4   # (log phi)'''
    if k == 0:
        out[ins] = p
    elif k == 1:
        out[ins] = p * g
    elif k == 2:
        out[ins] = p * (g * g + g1)
    elif k == 3:
        out[ins] = p * (g**3 + 3 * g * g1 + g2)
    else:
        raise ValueError("bump derivatives implemented up to order 3")
    return out


@lru_cache(maxsize=1)
def _cdf_table(n: int = 2**16):
    t = np.linspace(-0.5, 0.5, n + 1)
    c = kernels.cumulative_simpson(bump(t), t[1] - t[0])
    return t, c / c[-1], c[-1]


def bump_mass() -> float:
    """Integral of the 1D profile over (-1/2, 1/2)."""
    return float(_cdf_table()[2])


def bump_cdf(t: np.ndarray) -> np.ndarray:
    """Distribution function of the normalised 1D profile."""
    tt, c, _ = _cdf_table()
    return np.interp(t, tt, c, left=0.0, right=1.0)


@dataclass(frozen=True)
class Mollifier:
    """phi_eps sampled on a grid of spacing ``h`` in ``d`` dimensions."""

    eps: float
    spacing: float
    d: int = 1

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError("eps must be positive")
        if self.eps < 2 * self.spacing * (1 - 1e-12):
            raise ValidationError(
                f"kernel under-resolved: eps={self.eps:.4g} < 2h={2 * self.spacing:.4g}"
            )

    @property
    def radius(self) -> int:
        """Stencil half-width in cells; nodes at distance eps/2 carry zero weight."""
        return int(np.floor(0.5 * self.eps / self.spacing + 1e-9))

    def stencil(self) -> np.ndarray:
        """Normalised kernel on the (2R+1)^d stencil."""
        R, h = self.radius, self.spacing
        x = np.arange(-R, R + 1) * h / self.eps
        grids = np.meshgrid(*([x] * self.d), indexing="ij")
        k = bump(np.sqrt(sum(g * g for g in grids)))
        return k / (k.sum() * h**self.d)

    def torus_multiplier(self, N: int) -> np.ndarray:
        """rfft multiplier of the periodised kernel on the N^d grid (cell volume included)."""
        if abs(self.spacing - 1.0 / N) > 1e-15:
            raise ValidationError("mollifier spacing does not match the torus grid")
        if self.eps > 1.0:
            raise ValidationError("eps must be <= 1 on the unit torus")
        y = np.arange(N) / N
        y = np.minimum(y, 1.0 - y) / self.eps
        grids = np.meshgrid(*([y] * self.d), indexing="ij")
        k = bump(np.sqrt(sum(g * g for g in grids)))
        k = k / k.sum()
        return torus(self.d, N).fft(k)


def _require_grid(f: GridFunction):
    if not isinstance(f, GridFunction):
        raise ValidationError("expected a GridFunction")


def smooth(f: GridFunction, eps: float, order: int = 2, deriv: int = 0) -> GridFunction:
    """S_eps f.

    Torus inputs are convolved spectrally, line inputs directly (zero outside
    the sampled window).  Interval inputs are extended with :func:`extend`
    (``order`` and ``deriv`` are passed through), convolved, and restricted.
    """
    return _smooth(f, eps, order, deriv, times=1)


def smooth_twice(f: GridFunction, eps: float, order: int = 2, deriv: int = 0) -> GridFunction:
    """S_eps(S_eps f); for interval inputs the extension is taken once."""
    return _smooth(f, eps, order, deriv, times=2)


def _smooth(f, eps, order, deriv, times):
    _require_grid(f)
    mol = Mollifier(eps, f.spacing, f.d)
    if f.domain == "torus":
        g = torus(f.d, f.N)
        mult = mol.torus_multiplier(f.N) ** times
        return f.with_values(g.ifft(g.fft(f.values) * mult))
    if f.domain == "line":
        return f.with_values(_line_conv(f.values, mol.stencil(), times))
    ext = extend(f, order, deriv)
    reach = 0.5 * eps * times
    if reach > ext.flat_reach:
        raise ValidationError(
            f"eps={eps:.4g} too large for the extension band (needs eps*{times}/2 <= {ext.flat_reach:.4g})"
        )
    vals = _line_conv(ext.values, mol.stencil(), times)
    return f.with_values(vals[:, ext.offset:ext.offset + f.N])


def _line_conv(values, stencil, times):
    weights = stencil / stencil.sum()  # quadrature weights phi_eps(jh) * h
    out = np.asarray(values, dtype=float)
    for _ in range(times):
        out = np.stack([kernels.line_convolve(row, weights) for row in out])
    return out


# -- extension ----------------------------------------------------------------

@lru_cache(maxsize=None)
def reflection_weights(K: int) -> np.ndarray:
    """c with sum_k c_k (-k)^p = 1 for p = 0..K-1 (reflection about 0 with scales 1..K)."""
    k = np.arange(1, K + 1, dtype=float)
    V = np.vander(-k, K, increasing=True).T
    return np.linalg.solve(V, np.ones(K))


class Extension(GridFunction):
    """Line function returned by :func:`extend`; ``offset`` locates node 0 of the interval."""

    offset: int = 0
    flat_reach: float = 0.0


def extend(f: GridFunction, m: int, deriv: int = 0) -> Extension:
    """Higher-order reflection of interval samples to a compactly supported line function.

    With ``K = m + 2`` reflection scales, ``f(-x) := sum_k c_k f(k x)`` matches
    derivatives of orders 0..m+1 at each endpoint, so the extension is
    C^{m+1}.  If ``f`` samples the ``deriv``-th derivative of some ``u``, pass
    ``deriv`` to get the same derivative of the extension of ``u``; the
    weights become ``c_k (-k)^deriv``.  A smooth taper, equal to 1 within
    ``flat_reach`` of the interval, makes the support compact.
    """
    _require_grid(f)
    if f.domain != "interval":
        raise ValidationError("extend expects an interval GridFunction")
    if m < 0 or deriv < 0:
        raise ValidationError("m and deriv must be nonnegative")
    K = m + 2
    M = f.N - 1
    if M < 2 * K or not np.all(np.isfinite(f.values)):
        raise ValidationError(
            f"cannot extract endpoint jets: need >= {2 * K + 1} finite samples, got {f.N}"
        )
    c = reflection_weights(K) * (-np.arange(1, K + 1, dtype=float)) ** deriv
    I = M // K
    i = np.arange(1, I + 1)
    v = f.values
    left = sum(c[k - 1] * v[:, k * i] for k in range(1, K + 1))
    right = sum(c[k - 1] * v[:, M - k * i] for k in range(1, K + 1))
    h = f.spacing
    band = I * h
    flat = 0.5 * band
    dist = i * h
    taper = 1.0 - bump_cdf((dist - flat) / (0.4 * band) - 0.5)
    vals = np.concatenate([(left * taper)[:, ::-1], v, right * taper], axis=1)
    out = Extension(vals, domain="line", lo=f.lo - band, spacing=h)
    out.offset = I
    out.flat_reach = flat
    return out


# -- cutoff -------------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """rho_eps: mollified indicator of {dist(x, boundary) >= 3.5 eps}.

    It vanishes for dist < 3.375 eps and equals 1 for dist >= 3.625 eps.  On
    the torus there is no boundary and rho is identically 1.
    """

    eps: float
    domain: str = "interval"
    lo: float = 0.0
    hi: float = 1.0

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.domain == "torus":
            return np.ones_like(x) if deriv == 0 else np.zeros_like(x)
        w = CUTOFF_WIDTH * self.eps
        left = x - self.lo
        right = self.hi - x
        near_left = left <= right
        dist = np.where(near_left, left, right)
        t = (dist - CUTOFF_CENTER * self.eps) / w
        if deriv == 0:
            return bump_cdf(t)
        sign = np.where(near_left, 1.0, -1.0) ** deriv
        return sign * bump_derivative(t, deriv - 1) / (bump_mass() * w**deriv)

    def on(self, f: GridFunction, deriv: int = 0) -> np.ndarray:
        """Samples on the nodes of ``f``."""
        if f.domain == "torus":
            return np.full(f.values.shape[1:], 1.0 if deriv == 0 else 0.0)
        return self(f.nodes()[0], deriv)


def cutoff(domain: str, eps: float, lo: float = 0.0, hi: float = 1.0) -> Cutoff:
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if domain == "torus":
        return Cutoff(eps, "torus")
    if domain != "interval":
        raise ValidationError(f"unknown cutoff domain {domain!r}")
    if 5 * eps >= hi - lo:
        raise ValidationError(f"eps={eps} too large for an interval of length {hi - lo}")
    return Cutoff(eps, "interval", lo, hi)


def boundary_layer(x, width: float, lo: float = 0.0, hi: float = 1.0, outside: bool = False):
    """Mask of {dist(x, {lo, hi}) < width}, inside the interval or (``outside``) on the whole line."""
    x = np.asarray(x, dtype=float)
    dist = np.minimum(np.abs(x - lo), np.abs(x - hi))
    mask = dist < width
    if not outside:
        mask &= (x >= lo) & (x <= hi)
    return mask
