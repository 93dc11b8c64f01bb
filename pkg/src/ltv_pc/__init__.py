"""Predictive control for linear time-varying systems.

Online controllers that plan over a finite prediction window, plus numerical
checks of their perturbation, stability, regret and competitive-ratio bounds.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    ConvergenceError,
    ControllerError,
    DegenerateInstanceError,
    LtvPcError,
    PreconditionError,
    RankError,
    ReachabilityError,
    TimeRangeError,
    UncontrollableError,
    ValidationError,
)
