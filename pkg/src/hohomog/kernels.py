"""Hot loops, compiled when the extension is built, numpy otherwise.

``BACKEND`` names the active implementation.  Setting ``HOHOMOG_PURE=1`` in
the environment forces the numpy versions.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("HOHOMOG_PURE"):
        raise ImportError("pure backend requested")
    from . import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _fallback
    BACKEND = "numpy"


def cumulative_simpson(f, h):
    return _impl.cumulative_simpson(np.ascontiguousarray(f, dtype=float), float(h))


def trig_eval(c, c0, y, deriv=0):
    y = np.asarray(y, dtype=float)
    out = _impl.trig_eval(
        np.ascontiguousarray(c, dtype=complex), float(c0), np.ascontiguousarray(y.ravel()), int(deriv)
    )
    return np.asarray(out).reshape(y.shape)


def line_convolve(f, kern):
    f = np.ascontiguousarray(f, dtype=float)
    kern = np.ascontiguousarray(kern, dtype=float)
    if kern.shape[0] % 2 == 0 or kern.shape[0] > f.shape[0]:
        raise ValueError("kernel must have odd length no longer than the signal")
    # np.convolve beats the compiled loop (see benchmarks/bench_kernels.py)
    return np.asarray(_fallback.line_convolve(f, kern))


__all__ = ["BACKEND", "cumulative_simpson", "trig_eval", "line_convolve"]
