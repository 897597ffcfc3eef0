"""Numpy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def cumulative_simpson(f, h):
    """Running integral from the first node.

    Even nodes carry the composite Simpson sum; each odd node adds the
    one-interval rule (5, 8, -1)/12 to the preceding even node, and a trailing
    odd interval uses its mirror image (-1, 8, 5)/12.
    """
    f = np.ascontiguousarray(f, dtype=float)
    n = f.shape[0]
    out = np.zeros(n)
    if n < 3:
        if n == 2:
            out[1] = 0.5 * h * (f[0] + f[1])
        return out
    a, b, c = f[0:n - 2:2], f[1:n - 1:2], f[2::2]
    out[2::2] = np.cumsum(h * (a + 4.0 * b + c) / 3.0)
    out[1:n - 1:2] = out[0:n - 2:2] + h * (5.0 * a + 8.0 * b - c) / 12.0
    if n % 2 == 0:
        out[n - 1] = out[n - 2] + h * (-f[n - 3] + 8.0 * f[n - 2] + 5.0 * f[n - 1]) / 12.0
    return out


def trig_eval(c, c0, y, deriv, chunk=4096):
    """Real trigonometric series c0 + 2 Re sum_{k>=1} c_k (2 pi i k)^deriv e^{2 pi i k y}."""
    c = np.asarray(c, dtype=complex)
    y = np.asarray(y, dtype=float)
    k = np.arange(1, c.shape[0] + 1)
    coef = c * (2j * np.pi * k) ** deriv
    out = np.empty(y.shape[0])
    for s in range(0, y.shape[0], chunk):
        e = np.exp(2j * np.pi * np.outer(y[s:s + chunk], k))
        out[s:s + chunk] = 2.0 * (e @ coef).real
    if deriv == 0:
        out += c0
    return out


def line_convolve(f, kern):
    return np.convolve(np.asarray(f, dtype=float), np.asarray(kern, dtype=float), mode="same")
