"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes; library callers can catch the
base class or the specific failure they care about.
"""

__all__ = [
    "DPMestError",
    "ValidationError",
    "ParseError",
    "RegularityError",
    "DegenerateScaleError",
    "ConvergenceError",
    "SeparationError",
    "UnboundedSensitivityError",
    "SensitivityUndefinedError",
    "UnsupportedDimensionError",
    "OracleBudgetError",
]


class DPMestError(Exception):
    """Base class for all package errors."""


class ValidationError(DPMestError):
    """Invalid argument, configuration, or data shape."""


class ParseError(ValidationError):
    """CSV parsing failure; message names the offending row and column."""


class RegularityError(DPMestError):
    """A regularity condition failed (rank, positive definiteness).

    Corresponds to the "No Reply" behaviour: the caller should halt
    instead of releasing an invalid answer.
    """


class DegenerateScaleError(DPMestError):
    """The scale estimate collapsed to zero (e.g. constant data)."""


class ConvergenceError(DPMestError):
    """Iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SeparationError(ConvergenceError):
    """Logistic fit diverged, typically due to perfect separation."""


class UnboundedSensitivityError(DPMestError):
    """No finite gross-error-sensitivity bound is available; release refused."""


class SensitivityUndefinedError(DPMestError):
    """A sensitivity formula's denominator vanished (e.g. all residuals clipped)."""


class UnsupportedDimensionError(DPMestError):
    """Operation defined only for a specific tested dimension (e.g. k=1 intervals)."""


class OracleBudgetError(DPMestError):
    """Brute-force enumeration would exceed the configured budget."""
