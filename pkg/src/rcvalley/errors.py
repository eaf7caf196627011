"""Exception types shared across the package."""


class RcValleyError(Exception):
    """Base class for all package errors."""


class TopologyError(RcValleyError, ValueError):
    """Requested network cannot be realized."""


class SpectralRadiusError(RcValleyError, RuntimeError):
    """Leading eigenvalue magnitude could not be determined or is zero."""


class SingularSystemError(RcValleyError, RuntimeError):
    """Ridge normal equations are numerically singular."""


class PoleError(RcValleyError, ValueError):
    """An analytic solution hits a pole on the evaluation grid."""

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class SolverDivergence(RcValleyError, RuntimeError):
    """A time integrator produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
