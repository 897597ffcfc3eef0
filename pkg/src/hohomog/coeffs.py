"""Periodic coefficient tensors A^{alpha beta}_{ij}(y): presets, sampling, validation.

Scalar presets expand to ``A^{alpha beta}_{ij}(y) = a(y) delta_{alpha beta} delta_{ij}``,
which is coercive with constant ``ess inf a`` whenever ``a > 0``.  Tensors are
stored as arrays of shape ``(P, P, n, n, N, ..., N)`` with ``P`` the number of
order-m multi-indices in canonical order.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .multiindex import count, enumerate_multiindices
from .spectral import adjoint_tensor, torus

PRESETS = ("constant", "cosine_1d", "laminate_2d", "smoothed_checkerboard_2d", "tabulated")


@dataclass(frozen=True)
class Preset:
    name: str
    params: dict = field(default_factory=dict)

    def key(self) -> str:
        """Stable short hash, used for cache file names."""
        def enc(v):
            if isinstance(v, np.ndarray):
                return {"array": v.tolist()}
            return v

        blob = json.dumps({"name": self.name, "params": {k: enc(v) for k, v in self.params.items()}},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    d: int
    m: int
    n: int
    N: int
    values: np.ndarray
    mu: float
    preset: Preset | None = None
    func: Callable | None = None

    @property
    def P(self) -> int:
        return count(self.d, self.m)

    @property
    def symmetric(self) -> bool:
        return bool(np.array_equal(self.values, adjoint_tensor(self.values)))

    @property
    def is_constant(self) -> bool:
        ref = self.values[(...,) + (slice(0, 1),) * self.d]
        return bool(np.all(self.values == ref))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def check_bounds(self) -> bool:
        """Boundedness |A| <= 1/mu over every sample."""
        return self.max_abs() <= (1.0 / self.mu) * (1 + 1e-12)

    def adjoint(self) -> "CoefficientField":
        f = None
        if self.func is not None:
            f = lambda pts, g=self.func: adjoint_tensor(g(pts))
        return CoefficientField(self.d, self.m, self.n, self.N, adjoint_tensor(self.values).copy(),
                                self.mu, self.preset, f)

    def at(self, points) -> np.ndarray:
        """Evaluate A at arbitrary points (one coordinate array per axis), periodically."""
        pts = [np.mod(np.asarray(p, dtype=float), 1.0) for p in points]
        if self.func is not None:
            return self.func(pts)
        return _fourier_evaluate(self.values, self.d, pts)

    def rescaled(self, eps: float, N_fine: int) -> np.ndarray:
        """Samples of A(x/eps) on the N_fine^d grid of the unit torus (1/eps integer)."""
        periods = 1.0 / eps
        if abs(periods - round(periods)) > 1e-9:
            raise ValidationError(f"1/eps must be an integer, got eps={eps}")
        periods = int(round(periods))
        if N_fine % periods:
            raise ValidationError(f"fine grid {N_fine} is not a multiple of 1/eps={periods}")
        cell_pts = N_fine // periods
        if self.func is not None:
            y = np.arange(N_fine) / N_fine * periods
            mesh = np.meshgrid(*([y] * self.d), indexing="ij")
            return self.func([np.mod(c, 1.0) for c in mesh])
        cell = self.values if cell_pts == self.N else _resample(self.values, self.d, cell_pts)
        reps = (1, 1, 1, 1) + (periods,) * self.d
        return np.tile(cell, reps)


def _expand_scalar(a: np.ndarray, d: int, m: int, n: int) -> np.ndarray:
    P = count(d, m)
    eye = np.einsum("ab,ij->abij", np.eye(P), np.eye(n))
    return eye.reshape(eye.shape + (1,) * a.ndim) * a


def _skew_part(pts, d, m, n, skew):
    # pointwise antisymmetric, so it leaves the quadratic form unchanged
    P = count(d, m)
    s = skew * np.sin(2 * np.pi * (pts[0] + pts[-1]))
    out = np.zeros((P, P, n, n) + s.shape)
    for i in range(n):
        out[0, P - 1, i, i] = s
        out[P - 1, 0, i, i] = -s
    return out


def _square_wave(y, width, kmax):
    # +1 on (0, 1/2), -1 on (1/2, 1), convolved with a Gaussian of std ``width``
    k = np.arange(1, kmax + 1, 2)
    damp = np.exp(-2 * np.pi**2 * k**2 * width**2)
    return (4 / np.pi) * np.tensordot(np.sin(2 * np.pi * np.multiply.outer(y, k)), damp / k, axes=1)


def _scalar_function(preset: Preset, d: int) -> tuple[Callable, float, float]:
    """Return (a(pts), ess inf a, sup a) for a scalar preset."""
    p = preset.params
    if preset.name == "constant":
        c = float(p.get("c", 1.0))
        return (lambda pts: np.full(np.shape(pts[0]), c)), c, c
    if preset.name in ("cosine_1d", "laminate_2d"):
        a0, a1 = float(p.get("a0", 2.0)), float(p.get("a1", 1.0))
        if a0 - abs(a1) <= 0:
            raise ValidationError(f"{preset.name}: a0={a0}, a1={a1} makes the coefficient vanish")
        return (lambda pts: a0 + a1 * np.cos(2 * np.pi * pts[0])), a0 - abs(a1), a0 + abs(a1)
    if preset.name == "smoothed_checkerboard_2d":
        contrast = float(p.get("contrast", 4.0))
        width = float(p.get("width", 0.05))
        if contrast <= 0 or width <= 0:
            raise ValidationError("smoothed_checkerboard_2d needs contrast > 0 and width > 0")
        kmax = int(math.ceil(math.sqrt(40.0) / (math.pi * width))) | 1

        def a(pts):
            s = _square_wave(pts[0], width, kmax) * _square_wave(pts[1], width, kmax)
            return 1.0 + (contrast - 1.0) * 0.5 * (1.0 + s)

        return a, min(1.0, contrast), max(1.0, contrast)
    raise ValidationError(f"unknown scalar preset {preset.name!r}")


def sample(preset: Preset | str, N: int, m: int = 1, d: int | None = None, n: int = 1) -> CoefficientField:
    """Sample a preset at the nodes k/N of the unit cell."""
    if isinstance(preset, str):
        preset = Preset(preset)
    if N < 4 or N % 2:
        raise ValidationError(f"grid resolution must be even and >= 4, got {N}")
    if preset.name not in PRESETS:
        raise ValidationError(f"unknown preset {preset.name!r}; expected one of {PRESETS}")
    natural = {"cosine_1d": 1, "laminate_2d": 2, "smoothed_checkerboard_2d": 2}.get(preset.name)
    if d is None:
        d = natural or int(preset.params.get("d", 1))
    if natural is not None and d != natural:
        raise ValidationError(f"preset {preset.name} is {natural}-dimensional, got d={d}")
    if d not in (1, 2, 3) or m < 1 or n < 1:
        raise ValidationError(f"unsupported d={d}, m={m}, n={n}")
    P = count(d, m)

    if preset.name == "tabulated" or (preset.name == "constant" and "tensor" in preset.params):
        return _explicit(preset, N, m, d, n)

    a, lo, hi = _scalar_function(preset, d)
    skew = float(preset.params.get("skew", 0.0))
    if skew and P < 2:
        raise ValidationError("a skew part needs at least two order-m multi-indices")

    def func(pts):
        out = _expand_scalar(a(pts), d, m, n)
        if skew:
            out = out + _skew_part(pts, d, m, n, skew)
        return out

    y = np.arange(N) / N
    mesh = np.meshgrid(*([y] * d), indexing="ij")
    values = func(mesh)
    bound = max(hi, abs(skew) + hi) if skew else hi
    mu = float(preset.params.get("mu", min(lo, 1.0 / bound)))
    field_ = CoefficientField(d, m, n, N, values, mu, preset, func)
    if not field_.check_bounds():
        raise ValidationError(f"claimed mu={mu} violates max|A| <= 1/mu")
    return field_


def _explicit(preset: Preset, N, m, d, n) -> CoefficientField:
    P = count(d, m)
    if preset.name == "constant":
        t = np.asarray(preset.params["tensor"], dtype=float)
        t = t.reshape(P, P, n, n) if t.size == (P * n) ** 2 else t
        if t.shape != (P, P, n, n):
            raise ValidationError(f"constant tensor must have shape {(P, P, n, n)}, got {t.shape}")
        values = np.broadcast_to(t.reshape(t.shape + (1,) * d), t.shape + (N,) * d).copy()

        def func(pts, t=t):
            shp = np.shape(pts[0])
            return np.broadcast_to(t.reshape(t.shape + (1,) * len(shp)), t.shape + shp).copy()
    else:
        v = np.asarray(preset.params["values"], dtype=float)
        if v.shape == (N,) * d:
            v = _expand_scalar(v, d, m, n)
        if v.shape != (P, P, n, n) + (N,) * d:
            raise ValidationError(f"tabulated samples have shape {v.shape}, expected grid {N}^{d}")
        values, func = v, None
    if not np.all(np.isfinite(values)):
        raise ValidationError("non-finite coefficient samples")
    mu = float(preset.params.get("mu", 1.0 / max(np.max(np.abs(values)), 1e-300)))
    if mu <= 0:
        raise ValidationError("mu must be positive")
    field_ = CoefficientField(d, m, n, N, values, mu, preset, func)
    if not field_.check_bounds():
        raise ValidationError(f"claimed mu={mu} violates max|A| <= 1/mu")
    return field_


def constant(c: float | np.ndarray, N: int, m: int = 1, d: int = 1, n: int = 1, **kw) -> CoefficientField:
    if np.ndim(c) == 0:
        return sample(Preset("constant", {"c": float(c), **kw}), N, m=m, d=d, n=n)
    return sample(Preset("constant", {"tensor": np.asarray(c, dtype=float), **kw}), N, m=m, d=d, n=n)


def _fourier_evaluate(values, d, pts):
    """Trigonometric interpolation of grid samples at arbitrary points (Nyquist dropped)."""
    N = values.shape[-1]
    coef = np.fft.fftn(values, axes=tuple(range(values.ndim - d, values.ndim))) / N**d
    k = np.fft.fftfreq(N, 1.0 / N)
    keep = np.abs(k) < N / 2
    shape = np.shape(pts[0])
    flat = [np.ravel(p) for p in pts]
    phases = [np.exp(2j * np.pi * np.outer(f, k[keep])) for f in flat]
    c = coef
    for ax in range(d):
        c = np.take(c, np.nonzero(keep)[0], axis=values.ndim - d + ax)
    if d == 1:
        out = np.einsum("...k,pk->...p", c, phases[0])
    elif d == 2:
        out = np.einsum("...kl,pk,pl->...p", c, phases[0], phases[1])
    else:
        out = np.einsum("...klq,pk,pl,pq->...p", c, *phases)
    return out.real.reshape(values.shape[:-d] + shape)


def _resample(values, d, M):
    """Fourier resampling of periodic grid samples to an M^d grid."""
    N = values.shape[-1]
    axes = tuple(range(values.ndim - d, values.ndim))
    F = np.fft.fftshift(np.fft.fftn(values, axes=axes), axes=axes)
    if M >= N:
        pad = [(0, 0)] * (values.ndim - d) + [((M - N) // 2, (M - N) // 2)] * d
        F = np.pad(F, pad)
    else:
        lo = (N - M) // 2
        sl = (slice(None),) * (values.ndim - d) + (slice(lo, lo + M),) * d
        F = F[sl]
    out = np.fft.ifftn(np.fft.ifftshift(F, axes=axes), axes=axes).real
    return out * (M / N) ** d


def coercivity_probe(A: CoefficientField, trials: int, seed: int = 0, cutoff: int = 4,
                     batch: int = 256) -> float:
    """Smallest sampled Rayleigh quotient  sum <D^a phi, A D^b phi> / sum ||D^a phi||^2.

    Test fields are every single Fourier mode with ``max|xi_k| <= cutoff`` plus
    ``trials`` random fields (band-limited noise and localized Gaussian bumps)
    drawn from a per-trial stream, so the estimate is nonincreasing in
    ``trials``.  The value bounds the true coercivity constant from above; a
    non-positive result proves coercivity fails for the sampled field.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    g = torus(A.d, A.N)
    alphas = enumerate_multiindices(A.d, A.m)
    best = np.inf
    fields = _mode_fields(A, cutoff)
    for s in range(0, len(fields), batch):
        best = min(best, _min_quotient(A, g, alphas, np.stack(fields[s:s + batch])))
    for s in range(0, trials, batch):
        phis = np.stack([_random_field(A, seed, i) for i in range(s, min(trials, s + batch))])
        best = min(best, _min_quotient(A, g, alphas, phis))
    if not np.isfinite(best):
        raise ValidationError("every probe field was degenerate")
    return float(best)


def _mode_fields(A, cutoff):
    y = np.arange(A.N) / A.N
    mesh = np.meshgrid(*([y] * A.d), indexing="ij")
    rng = range(-cutoff, cutoff + 1)
    out = []
    for xi in np.ndindex(*([2 * cutoff + 1] * A.d)):
        xi = [rng[k] for k in xi]
        if not any(xi) or [v for v in xi if v][0] < 0:
            continue
        phase = 2 * np.pi * sum(k * c for k, c in zip(xi, mesh))
        for trig in (np.cos, np.sin):
            for i in range(A.n):
                f = np.zeros((A.n,) + (A.N,) * A.d)
                f[i] = trig(phase)
                out.append(f)
    return out


def _random_field(A, seed, i):
    rng = np.random.default_rng([seed, i])
    shape = (A.N,) * A.d
    vec = rng.standard_normal(A.n)
    if rng.random() < 2 / 3:
        h = 1.0 / A.N
        width = math.exp(rng.uniform(math.log(h), math.log(0.25)))
        center = rng.random(A.d)
        y = np.arange(A.N) / A.N
        r2 = np.zeros(shape)
        for ax in range(A.d):
            dist = np.abs(y - center[ax])
            dist = np.minimum(dist, 1 - dist)
            r2 = r2 + (dist**2).reshape([-1 if k == ax else 1 for k in range(A.d)])
        bump = np.exp(-r2 / (2 * width**2))
        return vec.reshape((-1,) + (1,) * A.d) * bump
    kmax = int(rng.integers(1, A.N // 2))
    g = torus(A.d, A.N)
    spec = rng.standard_normal((A.n,) + g.spectral_shape) + 1j * rng.standard_normal((A.n,) + g.spectral_shape)
    keep = np.ones(g.spectral_shape, dtype=bool)
    for f in g.freqs:
        keep &= np.abs(f) <= kmax
    return g.ifft(spec * keep * g.interior)


def _min_quotient(A, g, alphas, phis):
    grads = g.derivatives(phis, alphas)  # (P, B, n, *grid)
    flux = np.einsum("abij...,bkj...->aki...", A.values, grads)
    axes = tuple(range(3, grads.ndim))
    num = np.sum(grads * flux, axis=(0, 2) + axes)
    den = np.sum(grads * grads, axis=(0, 2) + axes)
    ok = den > 1e-20 * max(float(np.max(den)), 1e-300)
    if not np.any(ok):
        return np.inf
    return float(np.min(num[ok] / den[ok]))
