"""Moment problem, control synthesis and control norms.

The boundary control is ``f(t) = int_0^t g``, with

    g = sum_k (lam_k / b_k) (rho0_k - rhoT_k e^{lam_k T}) sigma_k

where ``sigma_k`` is the biorthogonal family and ``b_k`` the coupling of the
boundary datum to mode k.  By default ``b_k = r_k``, the trace coefficient.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .biortho import BiorthogonalFamily, ExponentialSum, Primitive
from .errors import DomainError, MagnitudeError, MismatchError
from .quad import gauss_legendre
from .spectrum import QuadratureWarning, Spectrum, eigenfunction_matrix, leading_coefficient

LOG_BUDGET = 700.0
COUPLINGS = ("trace", "projection")


def coupling_coefficients(spectrum: Spectrum, coupling: str = "trace") -> tuple:
    """Per-mode weight of the boundary datum in the modal equations.

    ``"trace"`` uses r_k.  ``"projection"`` uses lam_k <x^alpha p, Phi_k>,
    which works out to 2 nu c_k with c_k the small-x coefficient of Phi_k.
    """
    if coupling == "trace":
        return tuple(m.r for m in spectrum.modes)
    if coupling == "projection":
        p = spectrum.precision
        with p.context():
            return tuple(2 * spectrum.params.nu * leading_coefficient(spectrum.params, m, p) for m in spectrum.modes)
    raise DomainError(f"unknown coupling {coupling!r}; expected one of {COUPLINGS}")


@dataclass(frozen=True)
class ControlProblem:
    spectrum: Spectrum
    T: mpfr
    rho0: tuple
    rhoT: tuple
    tail_norm: float = 0.0  # ||u0 - Pi_K u0||, zero for modal data

    def __post_init__(self):
        if len(self.rho0) != self.spectrum.K or len(self.rhoT) != self.spectrum.K:
            raise MismatchError("coefficient lists must have one entry per mode")
        if not self.T > 0:
            raise DomainError("the horizon T must be positive")
        if not all(math.isfinite(float(v)) for v in self.rho0 + self.rhoT):
            raise DomainError("coefficients must be finite")

    @classmethod
    def create(cls, spectrum: Spectrum, T, rho0: Sequence, rhoT: Sequence | None = None, tail_norm=0.0):
        p = spectrum.precision
        rhoT = [0] * len(rho0) if rhoT is None else rhoT
        return cls(spectrum, p.mpf(T), tuple(p.mpf(v) for v in rho0), tuple(p.mpf(v) for v in rhoT), tail_norm)

    @property
    def params(self):
        return self.spectrum.params

    @property
    def K(self) -> int:
        return self.spectrum.K


@dataclass(frozen=True)
class SynthesizedControl:
    g: ExponentialSum
    f: Primitive
    h1_norm: mpfr
    moment_residuals: tuple
    admissibility_score: float
    coupling: str
    weights: tuple = field(repr=False, default=())
    boundary_values: tuple = (0.0, 0.0)  # f(0), f(T)

    @property
    def T(self):
        return self.g.T

    def f_at(self, t) -> mpfr:
        return self.f(t)

    def g_at(self, t) -> mpfr:
        return self.g(t)

    def to_dict(self) -> dict:
        return {
            "T": str(self.T),
            "coupling": self.coupling,
            "rates": [str(r) for r in self.g.rates],
            "g_coefficients": [str(c) for c in self.g.coeffs],
            "f_exp_coefficients": [str(c) for c in self.f.exp.coeffs],
            "f_const": str(self.f.const),
            "f_slope": str(self.f.slope),
            "h1_norm": str(self.h1_norm),
            "g_l2_norm": str(self.g.l2_norm()),
            "f_l2_norm": str(self.f.l2_norm()),
            "f_T": repr(self.boundary_values[1]),
            "moment_residuals": [repr(r) for r in self.moment_residuals],
            "admissibility_score": repr(self.admissibility_score),
        }


@dataclass(frozen=True)
class Projection:
    rho: np.ndarray
    norm_sq: float
    parseval_defect: float

    @property
    def tail_norm(self) -> float:
        return math.sqrt(max(self.parseval_defect, 0.0))


def fourier_coefficients(u, spectrum: Spectrum, nodes: int = 400) -> Projection:
    """rho_k = int_0^1 u Phi_k dx for a vectorised callable, or passthrough for a modal list.

    ``nodes`` must be a multiple of 20 (panels of 20 points).
    """
    if not callable(u):
        rho = np.asarray(u, dtype=float)
        if rho.shape != (spectrum.K,):
            raise MismatchError("modal data must have one coefficient per mode")
        return Projection(rho, float(rho @ rho), 0.0)

    if nodes < 20 or nodes % 20:
        raise DomainError("nodes must be a positive multiple of 20")

    panels = nodes // 20
    graded = min(6, panels - 1)

    def project(n):
        x, w = gauss_legendre(n, panels=panels, graded=graded)
        ux = np.asarray(u(x), dtype=float)
        return eigenfunction_matrix(spectrum, x) @ (w * ux), float(np.dot(w, ux**2))

    rho, norm_sq = project(nodes)
    # same panels, twice the points in each, so every panel is refined
    finer, _ = project(2 * nodes)
    if np.max(np.abs(finer - rho)) > 1e-8:
        warnings.warn("Fourier coefficients changed by more than 1e-8 under refinement", QuadratureWarning)
    return Projection(rho, norm_sq, norm_sq - float(rho @ rho))


def admissibility(rhoT: Sequence, params, P: float) -> float:
    """sum_k |rhoT_k| k^(1/2 - nu) e^(P pi k), evaluated in log space; +inf past the budget."""
    if not P > 0:
        raise DomainError("P must be positive")
    nu = float(params.nu)
    total = 0.0
    for k, rho in enumerate(rhoT, start=1):
        a = abs(float(rho))
        if a == 0:
            continue
        log_term = math.log(a) + (0.5 - nu) * math.log(k) + P * math.pi * k
        if log_term > LOG_BUDGET:
            return math.inf
        total += math.exp(log_term)
    return total


def synthesize(
    problem: ControlProblem,
    family: BiorthogonalFamily,
    coupling: str = "trace",
    P: float | None = None,
) -> SynthesizedControl:
    spectrum = problem.spectrum
    p = spectrum.precision
    if family.K != problem.K or family.T != problem.T:
        raise MismatchError("family and problem disagree on K or T")
    if any(abs(float(a - b)) > 1e-30 * float(b) for a, b in zip(family.lambdas, spectrum.lambdas)):
        raise MismatchError("family was built for a different spectrum")
    couple = coupling_coefficients(spectrum, coupling)
    T = problem.T
    with p.context():
        weights = []
        for k, (lam, b, r0, rT) in enumerate(zip(spectrum.lambdas, couple, problem.rho0, problem.rhoT), 1):
            if rT != 0 and float(gmpy2.log(abs(rT)) + lam * T) > LOG_BUDGET:
                raise MagnitudeError(
                    f"target mode {k} needs rhoT e^(lam T) beyond e^{LOG_BUDGET:g}; unreachable at this T"
                )
            weights.append(lam / b * (r0 - rT * gmpy2.exp(lam * T)))
        coeffs = [mpfr(0)] * len(family.rates)
        for w, sigma in zip(weights, family.sigmas):
            for i, c in enumerate(sigma.coeffs):
                coeffs[i] += w * c
    g = ExponentialSum(T, family.rates, tuple(coeffs), p)
    f = g.antiderivative()
    with p.context():
        h1 = gmpy2.sqrt(f.l2_norm() ** 2 + g.l2_norm() ** 2)
        residuals = []
        for lam, b, r0, rT in zip(spectrum.lambdas, couple, problem.rho0, problem.rhoT):
            decay = gmpy2.exp(-lam * T)
            residuals.append(abs(float(b * f.scaled_moment(lam) + r0 * decay - rT)))
    score = admissibility(problem.rhoT, spectrum.params, P) if P else math.nan
    return SynthesizedControl(
        g, f, h1, tuple(residuals), score, coupling, tuple(weights), (float(f(0)), float(f(T)))
    )


def h1_norm(control: SynthesizedControl) -> mpfr:
    """||f||_{H^1(0,T)} from the closed-form antiderivative."""
    return control.h1_norm
