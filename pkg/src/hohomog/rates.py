"""Two-scale remainder, discrete norms, slope fits, excess functionals, and
the large-scale regularity probes.

Balls are one-dimensional here: ``B(x0, r) = [x0 - r, x0 + r]``, clipped to
nothing (an error is raised if the ball leaves an interval domain) and taken
with periodic distance on the torus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels, smoothing
from .cellproblem import CorrectorSet
from .coeffs import _resample
from .errors import FitError, ValidationError
from .multiindex import enumerate_multiindices
from .spectral import GridFunction, torus

NORM_KINDS = ("L2", "Lq", "Hk_semi", "Hk", "Wkq")


# -- two-scale remainder ------------------------------------------------------

def corrector_series(chi_cell: np.ndarray):
    """Fourier data (c_k for k >= 1, c_0) of a real 1D periodic corrector sampled on its cell grid."""
    N = chi_cell.shape[-1]
    c = np.fft.rfft(chi_cell) / N
    return c[1:N // 2], float(c[0].real)


def corrector_at(chi_cell: np.ndarray, y, deriv: int = 0) -> np.ndarray:
    """d^k/dy^k of the trigonometric interpolant of a 1D cell corrector at points y."""
    c, c0 = corrector_series(chi_cell)
    return kernels.trig_eval(c, c0, y, deriv)


def build_w(u_eps: GridFunction, u0: GridFunction, cs: CorrectorSet, eps: float,
            rho: smoothing.Cutoff | None = None) -> GridFunction:
    """w = u_eps - u0 - eps^m sum_gamma chi^gamma(x/eps) S_eps^2(D^gamma u0~) rho_eps.

    Torus inputs: u0 is its own extension, everything is spectral and rho = 1.

    Interval inputs (d = 1, scalar): ``u_eps`` and ``u0`` must carry exact
    derivative samples of orders 1..m; D^m u0 is extended by reflection and
    smoothed twice, and the returned function carries derivative samples of
    orders 1..m.  Derivatives of the smoothed factor and of rho are taken by
    second-order differences and analytically, respectively.
    """
    if u_eps.domain != u0.domain or u_eps.values.shape != u0.values.shape:
        raise ValidationError("u_eps and u0 must share a grid")
    m = cs.m
    if u_eps.domain == "torus":
        return _build_w_torus(u_eps, u0, cs, eps)
    if u_eps.domain != "interval" or cs.d != 1 or cs.n != 1:
        raise ValidationError("interval remainders are implemented for scalar 1D problems")
    rho = rho or smoothing.cutoff("interval", eps, u_eps.lo, u_eps.lo + u_eps.spacing * (u_eps.N - 1))
    for k in range(1, m + 1):
        if k not in u_eps.derivatives or k not in u0.derivatives:
            raise ValidationError(f"missing derivative samples of order {k}")
    x = u_eps.nodes()[0]
    h = u_eps.spacing
    dm = GridFunction(u0.derivatives[m], domain="interval", lo=u0.lo, spacing=h)
    G = [smoothing.smooth_twice(dm, eps, order=m, deriv=m).values[0]]
    for _ in range(m):
        G.append(np.gradient(G[-1], h, edge_order=2))
    R = [rho(x, k) for k in range(m + 1)]
    # F = G * rho and its derivatives by Leibniz
    F = [sum(comb(k, j) * G[j] * R[k - j] for j in range(k + 1)) for k in range(m + 1)]
    y = x / eps
    X = [corrector_at(cs.chi[0, 0, 0], y, k) / eps**k for k in range(m + 1)]
    T = [eps**m * sum(comb(k, j) * X[j] * F[k - j] for j in range(k + 1)) for k in range(m + 1)]
    w = u_eps.values[0] - u0.values[0] - T[0]
    derivs = {k: (u_eps.derivatives[k][0] - u0.derivatives[k][0] - T[k])[None] for k in range(1, m + 1)}
    return GridFunction(w[None], domain="interval", lo=u_eps.lo, spacing=h, derivatives=derivs)


def _build_w_torus(u_eps, u0, cs, eps):
    d, m, Nf = u_eps.d, cs.m, u_eps.N
    periods = int(round(1.0 / eps))
    if abs(periods * eps - 1.0) > 1e-9 or Nf % periods:
        raise ValidationError("torus remainder needs 1/eps integer dividing the fine grid")
    g = torus(d, Nf)
    alphas = enumerate_multiindices(d, m)
    cell = Nf // periods
    chi = cs.chi if cell == cs.N else _resample(cs.chi, d, cell)
    chi = np.tile(chi, (1, 1, 1) + (periods,) * d)
    mult = smoothing.Mollifier(eps, 1.0 / Nf, d).torus_multiplier(Nf) ** 2
    Du0 = g.derivatives(u0.values, alphas)  # (P, n, *grid)
    S2 = g.ifft(g.fft(Du0) * mult)
    term = eps**m * np.einsum("gij...,gj...->i...", chi, S2)
    return GridFunction(u_eps.values - u0.values - term)


# -- norms ----------------------------------------------------------------------

def _derivative_samples(f: GridFunction, k: int) -> np.ndarray:
    """Stack over |alpha| = k of D^alpha f, shape (P, ncomp, *grid)."""
    if k == 0:
        return f.values[None]
    if f.periodic:
        return torus(f.d, f.N).derivatives(f.values, enumerate_multiindices(f.d, k))
    if k in f.derivatives:
        return np.asarray(f.derivatives[k])[None]
    out = f.values
    for _ in range(k):
        out = np.gradient(out, f.spacing, axis=-1, edge_order=2)
    return out[None]


def _lq(samples: np.ndarray, w: np.ndarray, q: float) -> float:
    mag = np.sqrt(np.sum(samples**2, axis=(0, 1)))
    if np.isinf(q):
        return float(np.max(mag))
    return float(np.sum(w * mag**q) ** (1.0 / q))


def norm(f: GridFunction, kind: str = "L2", q: float = 2.0, k: int = 0, mask=None) -> float:
    """Discrete norms by grid quadrature.

    kind: ``L2``; ``Lq``; ``Hk_semi`` (sum over |alpha| = k of ||D^alpha f||^2,
    square-rooted); ``Hk`` (orders 0..k); ``Wkq`` ((sum over j <= k of
    ||nabla^j f||_q^q)^(1/q)).  ``mask`` restricts the quadrature.
    """
    if kind not in NORM_KINDS:
        raise ValidationError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    if q < 1:
        raise ValidationError("q must be >= 1")
    if k < 0:
        raise ValidationError("k must be nonnegative")
    w = f.weights()
    if mask is not None:
        w = w * np.asarray(mask, dtype=float)
    if kind == "L2":
        return _lq(_derivative_samples(f, 0), w, 2.0)
    if kind == "Lq":
        return _lq(_derivative_samples(f, 0), w, q)
    if kind == "Hk_semi":
        return _lq(_derivative_samples(f, k), w, 2.0)
    if kind == "Hk":
        return float(np.sqrt(sum(_lq(_derivative_samples(f, j), w, 2.0) ** 2 for j in range(k + 1))))
    return float(sum(_lq(_derivative_samples(f, j), w, q) ** q for j in range(k + 1)) ** (1.0 / q))


def sobolev_exponents(d: int, m: int) -> dict:
    """q0 = 2d/(d-1) (None for d = 1) and q1 = 2d/(d-2m+1) when d > 2m-1 (None otherwise)."""
    q0 = None if d == 1 else 2 * d / (d - 1)
    q1 = 2 * d / (d - 2 * m + 1) if d > 2 * m - 1 else None
    return {"q0": q0, "q1": q1}


# -- slope fits -----------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    n: int


def rate_fit(points, solver_tol: float | None = None) -> RateFit:
    """Least squares fit of log(err) against log(eps)."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise FitError("need at least 3 points for a rate fit")
    eps = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise FitError("rate fit needs positive finite eps and errors")
    if solver_tol is not None and np.any(err < 10 * solver_tol):
        raise FitError(f"error {err.min():.3e} is within 10x of the solver tolerance {solver_tol:.1e}")
    X, Y = np.log(eps), np.log(err)
    V = np.stack([X, np.ones_like(X)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(V, Y, rcond=None)
    ss_res = float(np.sum((Y - V @ np.array([slope, intercept])) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, len(pts))


@dataclass
class RateReport:
    experiment: str
    norm_kind: str
    rows: list = field(default_factory=list)  # (eps, error, certificate id)
    fit: RateFit | None = None

    def add(self, eps, error, certificate):
        if self.rows and not eps < self.rows[-1][0]:
            raise ValidationError("eps values must be strictly decreasing")
        self.rows.append((float(eps), float(error), certificate))

    def fit_rates(self, solver_tol=None) -> RateFit:
        self.fit = rate_fit([(e, v) for e, v, _ in self.rows], solver_tol)
        return self.fit


# -- balls and polynomial fits --------------------------------------------------

def _ball(u: GridFunction, x0: float, r: float, values=None):
    if u.d != 1:
        raise ValidationError("ball functionals are implemented in one dimension")
    if r <= 0:
        raise ValidationError("radius must be positive")
    x = u.nodes()[0]
    v = u.values if values is None else values
    tol = 1e-9 * max(u.spacing, r)
    if u.periodic:
        if r > 0.5:
            raise ValidationError("torus balls need r <= 1/2")
        dx = (x - x0 + 0.5) % 1.0 - 0.5
    else:
        if x0 - r < x[0] - tol or x0 + r > x[-1] + tol:
            raise ValidationError(f"ball B({x0}, {r}) leaves the domain [{x[0]}, {x[-1]}]")
        dx = x - x0
    sel = np.abs(dx) <= r + tol
    order = np.argsort(dx[sel])
    t = dx[sel][order]
    vals = v[..., sel][..., order]
    if t.size < 2:
        raise FitError(f"ball of radius {r} holds fewer than two grid nodes")
    w = np.empty_like(t)
    gaps = np.diff(t)
    w[0], w[-1] = gaps[0] / 2, gaps[-1] / 2
    w[1:-1] = (gaps[:-1] + gaps[1:]) / 2
    return t, vals, w


def ball_mean(u: GridFunction, x0: float, r: float, values=None, power: float = 2.0) -> float:
    """(avg over B(x0, r) of |v|^power)^(1/power), v defaulting to u's values."""
    t, vals, w = _ball(u, x0, r, values)
    mag = np.sqrt(np.sum(np.atleast_2d(vals) ** 2, axis=0))
    return float((np.sum(w * mag**power) / np.sum(w)) ** (1.0 / power))


@dataclass
class PolyFit:
    residual: float          # (avg |u - P|^2)^(1/2) over the ball
    coefficients: np.ndarray  # (ncomp, deg+1) in powers of (x - x0)


def poly_fit(u: GridFunction, x0: float, r: float, degree: int) -> PolyFit:
    """Weighted L2 projection onto polynomials of degree <= ``degree`` on B(x0, r)."""
    t, vals, w = _ball(u, x0, r)
    if t.size < 2 * (degree + 1) + 1:
        raise FitError(f"r={r} spans {t.size} nodes, too few for a degree-{degree} fit")
    s = t / r
    V = np.vander(s, degree + 1, increasing=True)
    sw = np.sqrt(w / w.sum())
    Q, Rm = np.linalg.qr(V * sw[:, None])
    if np.min(np.abs(np.diag(Rm))) < 1e-12 * np.max(np.abs(np.diag(Rm))):
        raise FitError("rank-deficient polynomial basis on the ball")
    vals = np.atleast_2d(vals)
    coef_s = np.linalg.solve(Rm, Q.T @ (vals * sw).T).T      # (ncomp, deg+1)
    resid = vals - coef_s @ V.T
    res = float(np.sqrt(np.sum(w * np.sum(resid**2, axis=0)) / w.sum()))
    return PolyFit(res, coef_s / r ** np.arange(degree + 1))


@dataclass
class Excess:
    value: float
    fit: PolyFit


def _source_term(f_sources, x0, r, m, q):
    if not f_sources:
        return 0.0
    total = 0.0
    for k, fk in f_sources.items():
        if k > m - 1:
            raise ValidationError("source terms are indexed by orders <= m-1")
        total += r ** (2 * m - k) * ball_mean(fk, x0, r, power=q)
    return total


def excess_H(u: GridFunction, x0: float, r: float, m: int, f_sources=None, q: float = 2.0) -> Excess:
    """H(r): r^-m [inf over P_m of the L2 average of u - P, plus the source term in L^q]."""
    fit = poly_fit(u, x0, r, m)
    return Excess((fit.residual + _source_term(f_sources, x0, r, m, q)) / r**m, fit)


def excess_G(u0: GridFunction, x0: float, t: float, m: int, f_sources=None, q: float = 2.0) -> Excess:
    """G(t; u0), the same functional evaluated on a homogenized solution."""
    return excess_H(u0, x0, t, m, f_sources, q)


def excess_I(u: GridFunction, x0: float, r: float, m: int, f_sources=None) -> Excess:
    """I(r): as H but over P_{m-1}, with the source term in L^2."""
    fit = poly_fit(u, x0, r, m - 1)
    return Excess((fit.residual + _source_term(f_sources, x0, r, m, 2.0)) / r**m, fit)


def coeff_h(coefficients, m: int) -> float:
    """h = sum over |alpha| = m of |D^alpha P| / alpha!.

    In 1D with P = sum_k c_k (x - x0)^k this is |c_m| summed over components.
    """
    c = np.atleast_2d(np.asarray(coefficients, dtype=float))
    if c.shape[-1] <= m:
        return 0.0
    return float(np.sum(np.abs(c[:, m])))


@dataclass
class ExcessReport:
    eps: float
    m: int
    rows: list = field(default_factory=list)
    constant_coefficient: bool = False
    skipped: list = field(default_factory=list)

    @property
    def C_required(self) -> float:
        """Smallest C making every row satisfy H(dr) <= H(r)/2 + C sqrt(eps/r) I(2r)."""
        return max((row["C_req"] for row in self.rows), default=0.0)

    def verdicts(self, C_hat: float) -> list:
        out = []
        for row in self.rows:
            if self.constant_coefficient:
                ok = row["H_delta_r"] <= 0.5 * row["H_r"] + row["atol"]
            else:
                rhs = 0.5 * row["H_r"] + C_hat * np.sqrt(self.eps / row["r"]) * row["I_2r"]
                ok = row["H_delta_r"] <= rhs + row["atol"]
            out.append(bool(ok))
        return out


def dyadic_radii(lo: float, hi: float = 0.5) -> list:
    out, r = [], hi
    while r >= lo * (1 - 1e-12):
        out.append(r)
        r /= 2
    return out


def certify_excess_decay(u: GridFunction, eps: float, m: int, deltas=(1 / 8, 1 / 16, 1 / 32),
                         x0: float = 0.0, radii=None, constant_coefficient: bool = False,
                         f_sources=None, q: float = 2.0) -> ExcessReport:
    """Tabulate H(r), H(dr), I(2r), h(r) over dyadic r in [eps, 1/2].

    For oscillating coefficients each row records the constant C_req it
    needs; a family-wide C is then ``max(C_req)`` and the assertion of
    interest is its stability in eps.  For constant-coefficient solutions the
    rows test the pure halving G(dr) <= G(r)/2.
    """
    rep = ExcessReport(eps, m, constant_coefficient=constant_coefficient)
    lo = 0.0 if constant_coefficient else eps
    radii = dyadic_radii(max(lo, 4 * u.spacing), 0.5) if radii is None else radii
    scale = float(np.max(np.abs(u.values)))
    for r in radii:
        if not constant_coefficient and not eps * (1 - 1e-12) <= r <= 0.5:
            rep.skipped.append(r)
            continue
        try:
            Hr = excess_H(u, x0, r, m, f_sources, q)
            I2r = excess_I(u, x0, 2 * r, m, f_sources)
        except (FitError, ValidationError):
            rep.skipped.append(r)
            continue
        for delta in deltas:
            try:
                Hd = excess_H(u, x0, delta * r, m, f_sources, q)
            except FitError:
                rep.skipped.append(delta * r)
                continue
            atol = 1e-11 * scale / (delta * r) ** m
            gap = Hd.value - 0.5 * Hr.value
            if gap <= atol:
                c_req = 0.0
            elif I2r.value > 0:
                c_req = gap / (np.sqrt(eps / r) * I2r.value) if not constant_coefficient else np.inf
            else:
                c_req = np.inf
            rep.rows.append({
                "eps": eps, "r": r, "delta": delta, "H_r": Hr.value, "H_delta_r": Hd.value,
                "I_2r": I2r.value, "h_r": coeff_h(Hr.fit.coefficients, m), "C_req": c_req,
                "atol": atol,
            })
    return rep


# -- probes ---------------------------------------------------------------------

def _mth_derivative(u: GridFunction, m: int) -> np.ndarray:
    return _derivative_samples(u, m)[0]


def lipschitz_probe(u: GridFunction, eps: float, m: int, radii=None, x0: float = 0.0,
                    R: float = 1.0) -> dict:
    """sup over r in [eps, R/2] of (avg_{B_r} |u^(m)|^2)^(1/2) / (R^-m (avg_{B_R} |u|^2)^(1/2))."""
    radii = dyadic_radii(eps, R / 2) if radii is None else radii
    bad = [r for r in radii if not eps * (1 - 1e-12) <= r <= R / 2 * (1 + 1e-12)]
    if bad:
        raise ValidationError(f"radii {bad} outside [eps, R/2]")
    den = R ** (-m) * ball_mean(u, x0, R)
    Dm = _mth_derivative(u, m)
    vals = {}
    for r in radii:
        num = ball_mean(u, x0, r, values=Dm)
        vals[r] = 0.0 if num == 0 else (num / den if den > 0 else np.inf)
    return {"sup": max(vals.values()), "values": vals}


def reverse_holder_probe(u: GridFunction, p: float, m: int, x0: float = 0.0, r: float = 0.5) -> float:
    """(avg_B |u^(m)|^p)^(1/p) / (avg_2B |u^(m)|^2)^(1/2); 0 when both vanish."""
    if p <= 2:
        raise ValidationError("reverse Hoelder probe needs p > 2")
    Dm = _mth_derivative(u, m)
    num = ball_mean(u, x0, r, values=Dm, power=p)
    den = ball_mean(u, x0, 2 * r, values=Dm, power=2.0)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def caccioppoli_constant(u: GridFunction, k: int, x0: float, r: float) -> float:
    """r^{2k} int_{B_r} |u^(k)|^2 / int_{B_2r} |u|^2 (ratio of averages, times 1/2)."""
    Dk = _derivative_samples(u, k)[0]
    num = ball_mean(u, x0, r, values=Dk) ** 2 * r ** (2 * k)
    den = ball_mean(u, x0, 2 * r) ** 2
    return 0.5 * num / den if den > 0 else np.inf
