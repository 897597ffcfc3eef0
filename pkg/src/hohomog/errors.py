class HomogError(Exception):
    """Base class for package errors."""


class ValidationError(HomogError, ValueError):
    """Invalid inputs: presets, grids, configs."""


class SolverError(HomogError, RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, msg, residual=float("nan"), iterations=0):
        super().__init__(f"{msg} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class CoercivityError(SolverError):
    """Negative curvature met in CG: the coefficient is probably not coercive."""


class ResolutionError(SolverError):
    """A discretisation guard refused the requested resolution."""


class FitError(HomogError, ValueError):
    pass
