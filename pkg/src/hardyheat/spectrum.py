"""Eigensystem of -d^2/dx^2 - mu/x^2 on (0, 1) with Dirichlet conditions.

For mu < 1/4 the normalised eigenfunctions are
``Phi_k(x) = C_k sqrt(x) J_nu(j_k x)`` with eigenvalues ``lambda_k = j_k^2``,
where ``j_k`` is the k-th positive zero of J_nu and ``nu = sqrt(1 - 4 mu) / 2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import ConsistencyError, CriticalParameterError, DomainError
from .quad import gauss_legendre
from .specfun import (
    DEFAULT_PRECISION,
    Precision,
    ZeroCache,
    bessel_j,
    bessel_j_prime,
    bessel_j_second,
    bessel_zeros,
)

NU_MAX = 25

# Grid evaluations only need double-precision output; the series still gets
# its cancellation guard bits on top of these.
GRID_PRECISION = Precision(64, series_tol=2.0**-60)

RICHARDSON_PROBES = ("1e-2", "1e-3", "1e-4", "1e-5")


class QuadratureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PotentialParams:
    mu: mpfr
    nu: mpfr
    alpha: mpfr

    @property
    def critical_gap(self) -> float:
        """sqrt(1 - 4 mu) = 2 nu, the distance to the critical potential."""
        return 2 * float(self.nu)


def derive_params(mu, precision: Precision = DEFAULT_PRECISION) -> PotentialParams:
    """nu = sqrt(1 - 4 mu)/2 and alpha = 1/2 - nu for a subcritical mu."""
    m = precision.mpf(mu)
    with precision.context():
        if m >= mpfr("0.25"):
            raise CriticalParameterError(
                f"mu = {float(m):g} violates the requirement mu < 1/4 "
                "(the Hardy constant; the boundary problem is ill posed there)"
            )
        root = gmpy2.sqrt(1 - 4 * m)
        nu = root / 2
        alpha = (1 - root) / 2
    if nu > NU_MAX:
        raise DomainError(f"mu = {float(m):g} gives nu = {float(nu):.3g} > {NU_MAX}")
    return PotentialParams(m, nu, alpha)


@dataclass(frozen=True)
class EigenMode:
    k: int
    j: mpfr
    lam: mpfr
    c_norm: mpfr
    r: mpfr


@dataclass(frozen=True)
class Spectrum:
    params: PotentialParams
    modes: tuple
    precision: Precision = DEFAULT_PRECISION

    @property
    def K(self) -> int:
        return len(self.modes)

    @property
    def lambdas(self) -> tuple:
        return tuple(m.lam for m in self.modes)

    @property
    def js(self) -> tuple:
        return tuple(m.j for m in self.modes)

    def mode(self, k: int) -> EigenMode:
        if not 1 <= k <= self.K:
            raise IndexError(f"mode {k} outside 1..{self.K}")
        return self.modes[k - 1]

    def leading(self, k: int) -> mpfr:
        """Coefficient c with Phi_k(x) ~ c x^(nu + 1/2) as x -> 0+."""
        return leading_coefficient(self.params, self.mode(k), self.precision)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "mu": str(p.mu),
            "nu": str(p.nu),
            "alpha": str(p.alpha),
            "mantissa_bits": self.precision.mantissa_bits,
            "modes": [
                {"k": m.k, "j": str(m.j), "lambda": str(m.lam), "C": str(m.c_norm), "r": str(m.r)}
                for m in self.modes
            ],
        }


def leading_coefficient(params: PotentialParams, mode: EigenMode, precision=DEFAULT_PRECISION) -> mpfr:
    with precision.context():
        nu = params.nu
        return mode.c_norm * mode.j**nu / (2**nu * gmpy2.gamma(nu + 1))


def _trace_probe(params: PotentialParams, mode: EigenMode, x: mpfr, precision: Precision) -> mpfr:
    # x^alpha Phi_k'(x), with Phi_k' from the product rule and the J' recurrence
    nu, j = params.nu, mode.j
    with precision.context(16):
        jx = j * x
        val = mode.c_norm * (
            bessel_j(nu, jx, precision) / (2 * gmpy2.sqrt(x))
            + j * gmpy2.sqrt(x) * bessel_j_prime(nu, jx, precision)
        )
        return x**params.alpha * val


def _neville_at_zero(h: Sequence, y: Sequence):
    """Value at 0 of the polynomial interpolating (h_i, y_i)."""
    p = list(y)
    n = len(p)
    for level in range(1, n):
        for i in range(n - level):
            p[i] = (h[i + level] * p[i] - h[i] * p[i + 1]) / (h[i + level] - h[i])
    return p[0]


def trace_limit(params: PotentialParams, mode: EigenMode, precision=DEFAULT_PRECISION) -> mpfr:
    """lim_{x->0+} x^alpha Phi_k'(x) by Richardson extrapolation.

    x^alpha Phi_k' is an even power series in x, so the samples are
    extrapolated polynomially in h = x^2.
    """
    with precision.context(16):
        xs = [mpfr(s) for s in RICHARDSON_PROBES]
        ys = [_trace_probe(params, mode, x, precision) for x in xs]
        return _neville_at_zero([x * x for x in xs], ys)


def trace_coefficient(params: PotentialParams, mode: EigenMode, precision=DEFAULT_PRECISION) -> mpfr:
    """Trace coefficient r_k = lim x^alpha Phi_k'(x) = C j^nu (1/2 + nu) / (2^nu Gamma(nu + 1))."""
    with precision.context():
        closed = leading_coefficient(params, mode, precision) * (mpfr("0.5") + params.nu)
    limit = trace_limit(params, mode, precision)
    rel = abs(float((limit - closed) / closed))
    if rel > 1e-4:
        raise ConsistencyError(
            f"r_{mode.k}: extrapolated limit {float(limit)} vs closed form {float(closed)}"
        )
    return closed


def build_spectrum(
    params: PotentialParams,
    K: int,
    precision: Precision = DEFAULT_PRECISION,
    cache: ZeroCache | None = None,
) -> Spectrum:
    if not 1 <= K <= 200:
        raise DomainError(f"K must lie in [1, 200], got {K}")
    table = bessel_zeros(params.nu, K, precision, cache=cache)
    modes = []
    for k, j in enumerate(table.zeros, start=1):
        with precision.context():
            c = gmpy2.sqrt(mpfr(2)) / abs(bessel_j_prime(params.nu, j, precision))
            lam = j * j
        mode = EigenMode(k, j, lam, c, mpfr(0))
        r = trace_coefficient(params, mode, precision)
        modes.append(EigenMode(k, j, lam, c, r))
    gap = 0.75 * math.pi if params.nu <= 0.5 else math.pi
    for a, b in zip(modes, modes[1:]):
        if not float(b.j - a.j) >= gap * (1 - 1e-14):
            raise ConsistencyError(f"eigenvalue gap violated between modes {a.k} and {b.k}")
    return Spectrum(params, tuple(modes), precision)


def eigenfunction(spectrum: Spectrum, k: int, x) -> mpfr:
    """Phi_k(x) = C_k sqrt(x) J_nu(j_k x) at working precision, 0 < x <= 1."""
    p = spectrum.precision
    m = spectrum.mode(k)
    with p.context(8):
        x = mpfr(x)
        if not 0 < x <= 1:
            raise DomainError("eigenfunctions are evaluated on (0, 1]")
        val = m.c_norm * gmpy2.sqrt(x) * bessel_j(spectrum.params.nu, m.j * x, p)
    return mpfr(val, p.mantissa_bits)


def eigenfunction_derivatives(spectrum: Spectrum, k: int, x):
    """(Phi_k, Phi_k', Phi_k'') at ``x`` in working precision."""
    p = spectrum.precision
    m = spectrum.mode(k)
    nu = spectrum.params.nu
    with p.context(8):
        x = mpfr(x)
        y = m.j * x
        J, dJ, d2J = bessel_j(nu, y, p), bessel_j_prime(nu, y, p), bessel_j_second(nu, y, p)
        s = gmpy2.sqrt(x)
        phi = m.c_norm * s * J
        d1 = m.c_norm * (J / (2 * s) + m.j * s * dJ)
        d2 = m.c_norm * (-J / (4 * x * s) + m.j * dJ / s + m.j * m.j * s * d2J)
        return phi, d1, d2


def eigenfunction_values(spectrum: Spectrum, k: int, xs) -> np.ndarray:
    """Phi_k on an array of points in (0, 1], rounded to double precision."""
    m = spectrum.mode(k)
    nu = spectrum.params.nu
    xs = np.asarray(xs, dtype=float)
    out = np.empty_like(xs)
    c = float(m.c_norm)
    with GRID_PRECISION.context(8):
        for i, x in enumerate(xs.flat):
            out.flat[i] = c * math.sqrt(x) * float(bessel_j(nu, m.j * mpfr(x), GRID_PRECISION))
    return out


def eigenfunction_matrix(spectrum: Spectrum, xs) -> np.ndarray:
    """Rows Phi_1..Phi_K sampled at ``xs``."""
    return np.array([eigenfunction_values(spectrum, k, xs) for k in range(1, spectrum.K + 1)])


def gram_defect(spectrum: Spectrum, nodes: int = 400) -> float:
    """max |<Phi_k, Phi_l> - delta_kl| under the composite Gauss-Legendre rule."""
    x, w = gauss_legendre(nodes)
    phi = eigenfunction_matrix(spectrum, x)
    gram = (phi * w) @ phi.T
    return float(np.max(np.abs(gram - np.eye(spectrum.K))))


class HardyResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def hardy_check(
    z: Callable,
    dz: Callable | None = None,
    nodes: int = 400,
    tol: float = 1e-9,
) -> HardyResult:
    """Compare (1/4) int z^2/x^2 with int z'^2 over (0, 1).

    ``z`` must vanish at both ends, like x^s (s > 1/2) at the origin.  When
    ``dz`` is omitted, ``z.deriv()`` is used (numpy polynomials).
    """
    if dz is None:
        dz = z.deriv()

    def both(n):
        x, w = gauss_legendre(n)
        zx = np.asarray(z(x), dtype=float)
        return 0.25 * float(np.dot(w, zx**2 / x**2)), float(np.dot(w, np.asarray(dz(x)) ** 2))

    lhs, rhs = both(nodes)
    lhs2, rhs2 = both(2 * nodes)
    drift = max(abs(lhs2 - lhs) / max(abs(lhs2), 1e-300), abs(rhs2 - rhs) / max(abs(rhs2), 1e-300))
    if drift > 1e-8:
        warnings.warn(f"Hardy quadrature not converged (relative drift {drift:.1e})", QuadratureWarning)
    return HardyResult(lhs, rhs, lhs <= rhs + tol)
