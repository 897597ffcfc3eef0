# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; semantics match :mod:`hohomog._fallback` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def cumulative_simpson(const double[::1] f, double h):
    cdef Py_ssize_t n = f.shape[0], k
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double acc = 0.0
    if n < 3:
        if n == 2:
            o[1] = 0.5 * h * (f[0] + f[1])
        return out
    for k in range(0, n - 2, 2):
        o[k + 1] = acc + h * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]) / 12.0
        acc += h * (f[k] + 4.0 * f[k + 1] + f[k + 2]) / 3.0
        o[k + 2] = acc
    if n % 2 == 0:
        o[n - 1] = o[n - 2] + h * (-f[n - 3] + 8.0 * f[n - 2] + 5.0 * f[n - 1]) / 12.0
    return out


def trig_eval(const double complex[::1] c, double c0, const double[::1] y, int deriv):
    cdef Py_ssize_t K = c.shape[0], n = y.shape[0], i, k
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double complex rot, cur, acc, fac
    cdef double twopi = 2.0 * M_PI
    cdef double complex ik
    # factors (2 pi i k)^deriv, k = 1..K
    facs = np.empty(K, dtype=np.complex128)
    cdef double complex[::1] fv = facs
    for k in range(K):
        ik = 1j * twopi * (k + 1)
        fac = 1.0
        for i in range(deriv):
            fac = fac * ik
        fv[k] = fac * c[k]
    for i in range(n):
        rot = cos(twopi * y[i]) + 1j * sin(twopi * y[i])
        cur = rot
        acc = 0.0
        for k in range(K):
            acc = acc + fv[k] * cur
            cur = cur * rot
            if (k & 63) == 63:
                # re-anchor the rotation to bound drift
                cur = cos(twopi * (k + 2) * y[i]) + 1j * sin(twopi * (k + 2) * y[i])
        o[i] = 2.0 * acc.real + (c0 if deriv == 0 else 0.0)
    return out


def line_convolve(const double[::1] f, const double[::1] kern):
    cdef Py_ssize_t n = f.shape[0], L = kern.shape[0], half = L // 2, i, j, src
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(L):
            src = i + half - j
            if 0 <= src < n:
                acc += kern[j] * f[src]
        o[i] = acc
    return out
