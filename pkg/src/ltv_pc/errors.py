"""Exception hierarchy shared by every module."""


class LtvPcError(Exception):
    """Base class for library errors."""


class ValidationError(LtvPcError, ValueError):
    """Malformed input data (shapes, non-finite entries, bad parameters)."""


class TimeRangeError(LtvPcError, IndexError):
    """A time index or window falls outside the horizon."""


class UncontrollableError(LtvPcError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class RankError(LtvPcError):
    """Controllability window is row-rank deficient where full rank is needed."""


class ReachabilityError(RankError):
    """Terminal state cannot be enforced from the window (p < d)."""


class ConvergenceError(LtvPcError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigurationError(LtvPcError, ValueError):
    pass


class PreconditionError(LtvPcError):
    """The inputs do not satisfy the hypotheses of the bound being checked."""


class DegenerateInstanceError(LtvPcError):
    pass


class ControllerError(LtvPcError):
    """A solver failure inside a controller run, tagged with the decision time."""

    def __init__(self, message, t, cause=None):
        super().__init__(message)
        self.t = t
        self.cause = cause
