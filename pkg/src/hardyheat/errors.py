"""Exception hierarchy.

Validation problems derive from ``ValueError`` (the CLI maps them to exit 2);
numerical guards derive from ``NumericalGuardError`` (exit 3).
"""


class HardyHeatError(Exception):
    pass


class DomainError(HardyHeatError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class CriticalParameterError(DomainError):
    """mu >= 1/4: the Dirichlet/weighted-trace problem is not well posed."""


class NumericalGuardError(HardyHeatError, ArithmeticError):
    """A numerical safeguard tripped; the result would not be trustworthy."""


class PrecisionError(NumericalGuardError):
    """Cancellation exceeded the working precision."""


class PrecisionExhaustedError(PrecisionError):
    """Gram system too ill-conditioned for the working precision."""


class BracketError(NumericalGuardError):
    """A computed Bessel zero escaped its analytic enclosure."""


class ConsistencyError(NumericalGuardError):
    """Two independent evaluations of the same quantity disagree."""


class MagnitudeError(NumericalGuardError):
    """A target coefficient needs more dynamic range than allowed."""


class MismatchError(HardyHeatError, ValueError):
    """Objects built for different spectra/horizons were combined."""
