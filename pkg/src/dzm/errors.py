"""Exception hierarchy shared by the numerical modules and the CLI."""


class DzmError(Exception):
    """Base class for all package errors."""


class ConstraintError(DzmError, ValueError):
    """A parameter violates a documented precondition."""


class CoincidentPointsError(ConstraintError):
    """A singular kernel was evaluated on the diagonal x == y."""


class ResonantShellError(DzmError, ValueError):
    """A grid frequency lies (numerically) on the shell |xi|^2 = lambda."""


class UnresolvedBallError(ConstraintError):
    """Grid spacing too coarse to resolve unit balls."""


class ConvergenceError(DzmError, RuntimeError):
    """An iterative method or quadrature did not reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FieldFormatError(DzmError, OSError):
    """Malformed DZM1 file."""
