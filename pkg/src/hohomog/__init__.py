"""Periodic homogenization of higher-order elliptic systems.

Cell problems and homogenized tensors (:mod:`hohomog.cellproblem`), the
smoothing operator and cutoff (:mod:`hohomog.smoothing`), forward solvers
(:mod:`hohomog.solvers`), two-scale remainders, rate fits and regularity
probes (:mod:`hohomog.rates`), and the experiment runner (:mod:`hohomog.cli`).
"""
__version__ = "0.1.0"

from .errors import (CoercivityError, ConvergenceError, FitError, HomogError, ResolutionError,
                     SolverError, ValidationError)
from .multiindex import MultiIndex, enumerate_multiindices
from .spectral import GridFunction

__all__ = [
    "__version__", "HomogError", "ValidationError", "SolverError", "ConvergenceError",
    "CoercivityError", "ResolutionError", "FitError", "MultiIndex", "enumerate_multiindices",
    "GridFunction",
]
