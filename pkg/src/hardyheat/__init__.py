"""Boundary controllability of the heat equation with an inverse-square potential.

The operator -d^2/dx^2 - mu/x^2 on (0, 1) is controlled through the weighted
trace at the singular endpoint.  Controls are built by the moment method from
a family biorthogonal to the exponentials exp(lambda_k t).
"""
from .biortho import BiorthogonalFamily, ExponentialSum, build_family, estimate_fit
from .control import ControlProblem, SynthesizedControl, fourier_coefficients, synthesize
from .errors import (
    CriticalParameterError,
    DomainError,
    HardyHeatError,
    MagnitudeError,
    MismatchError,
    NumericalGuardError,
    PrecisionError,
    PrecisionExhaustedError,
)
from .specfun import DEFAULT_PRECISION, Precision, bessel_j, bessel_zeros
from .spectrum import PotentialParams, Spectrum, build_spectrum, derive_params

__version__ = "0.1.0"
