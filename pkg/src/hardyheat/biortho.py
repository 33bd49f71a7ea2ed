"""Families biorthogonal to real exponentials on (0, T).

Time functions are stored in the shifted basis ``exp(-lam (T - t))``, whose
values lie in (0, 1] on [0, T], so nothing overflows however large lam*T
gets.  A biorthogonality condition ``int sigma e^{lam t} dt = delta`` is then
carried in the equivalent scaled form ``int sigma e^{-lam (T-t)} dt =
delta e^{-lam T}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import DomainError, MismatchError, PrecisionExhaustedError
from .specfun import DEFAULT_PRECISION, Precision

K_MAX = 30


def gram_entry(s, T):
    """int_0^T exp(-s (T - t)) dt for s = lam_k + lam_l >= 0 (current context)."""
    if s == 0:
        return +T
    return -gmpy2.expm1(-s * T) / s


def first_moment(lam, T):
    """int_0^T t exp(-lam (T - t)) dt for lam > 0 (current context)."""
    return T / lam + gmpy2.expm1(-lam * T) / (lam * lam)


@dataclass(frozen=True)
class ExponentialSum:
    """t -> sum_l c_l exp(-lam_l (T - t)) on [0, T]; rates distinct, sorted, >= 0."""

    T: mpfr
    rates: tuple = ()
    coeffs: tuple = ()
    precision: Precision = DEFAULT_PRECISION

    def __post_init__(self):
        if len(self.rates) != len(self.coeffs):
            raise ValueError("rates and coefficients differ in length")
        if any(r < 0 for r in self.rates):
            raise DomainError("rates must be nonnegative")
        if any(b <= a for a, b in zip(self.rates, self.rates[1:])):
            raise ValueError("rates must be distinct and sorted; use ExponentialSum.build")

    @classmethod
    def build(cls, T, terms: Iterable, precision: Precision = DEFAULT_PRECISION) -> "ExponentialSum":
        """Collect (rate, coefficient) pairs, merging repeated rates."""
        acc: dict = {}
        with precision.context():
            for rate, c in terms:
                rate = precision.mpf(rate)
                acc[rate] = acc.get(rate, mpfr(0)) + precision.mpf(c)
        rates = tuple(sorted(acc))
        return cls(precision.mpf(T), rates, tuple(acc[r] for r in rates), precision)

    @property
    def terms(self):
        return tuple(zip(self.rates, self.coeffs))

    def _check(self, other: "ExponentialSum"):
        if self.T != other.T:
            raise MismatchError("exponential sums live on different horizons")

    def __add__(self, other: "ExponentialSum") -> "ExponentialSum":
        self._check(other)
        return ExponentialSum.build(self.T, self.terms + other.terms, self.precision)

    def __sub__(self, other: "ExponentialSum") -> "ExponentialSum":
        return self + (-other)

    def __mul__(self, scalar) -> "ExponentialSum":
        with self.precision.context():
            s = mpfr(scalar)
            return ExponentialSum(self.T, self.rates, tuple(s * c for c in self.coeffs), self.precision)

    __rmul__ = __mul__

    def __neg__(self) -> "ExponentialSum":
        return self * -1

    def __call__(self, t) -> mpfr:
        with self.precision.context():
            t = mpfr(t)
            return sum((c * gmpy2.exp(-r * (self.T - t)) for r, c in self.terms), mpfr(0))

    def values(self, ts) -> np.ndarray:
        return np.array([float(self(t)) for t in np.asarray(ts, dtype=float)])

    def scaled_moment(self, lam) -> mpfr:
        """exp(-lam T) int_0^T sigma(t) exp(lam t) dt, with every factor bounded."""
        with self.precision.context():
            lam = mpfr(lam)
            return sum((c * gram_entry(r + lam, self.T) for r, c in self.terms), mpfr(0))

    def integral(self) -> mpfr:
        return self.scaled_moment(0)

    def l2_norm(self) -> mpfr:
        """sqrt(c^T G c) with G the Gram matrix of this sum's own rates."""
        with self.precision.context():
            total = mpfr(0)
            for ri, ci in self.terms:
                for rj, cj in self.terms:
                    total += ci * cj * gram_entry(ri + rj, self.T)
            return gmpy2.sqrt(total) if total > 0 else mpfr(0)

    def antiderivative(self) -> "Primitive":
        """F(t) = int_0^t sigma(s) ds as exponentials plus an affine part."""
        with self.precision.context():
            exp_terms, const, slope = [], mpfr(0), mpfr(0)
            for r, c in self.terms:
                if r == 0:
                    slope += c
                else:
                    exp_terms.append((r, c / r))
                    const -= c * gmpy2.exp(-r * self.T) / r
        return Primitive(ExponentialSum.build(self.T, exp_terms, self.precision), const, slope, anchored=True)


@dataclass(frozen=True)
class Primitive:
    """t -> E(t) + const + slope * t with E an exponential sum.

    ``anchored`` marks const = -E(0); evaluation then pairs each exponential
    with its value at 0, so F(0) is exactly zero.
    """

    exp: ExponentialSum
    const: mpfr
    slope: mpfr
    anchored: bool = False

    @property
    def T(self):
        return self.exp.T

    @property
    def precision(self):
        return self.exp.precision

    def __call__(self, t) -> mpfr:
        with self.precision.context():
            t = mpfr(t)
            if not self.anchored:
                return self.exp(t) + self.const + self.slope * t
            T = self.T
            paired = sum(
                (c * (gmpy2.exp(-r * (T - t)) - gmpy2.exp(-r * T)) for r, c in self.exp.terms), mpfr(0)
            )
            return paired + self.slope * t

    def values(self, ts) -> np.ndarray:
        return np.array([float(self(t)) for t in np.asarray(ts, dtype=float)])

    def scaled_moment(self, lam) -> mpfr:
        """int_0^T F(t) exp(-lam (T - t)) dt for lam > 0."""
        with self.precision.context():
            lam = mpfr(lam)
            T = self.T
            return (
                self.exp.scaled_moment(lam)
                + self.const * gram_entry(lam, T)
                + self.slope * first_moment(lam, T)
            )

    def l2_norm(self) -> mpfr:
        with self.precision.context():
            T, a, b = self.T, self.const, self.slope
            e = self.exp
            sq = e.l2_norm() ** 2
            cross = mpfr(0)
            for r, c in e.terms:
                cross += c * (a * gram_entry(r, T) + b * first_moment(r, T))
            affine = a * a * T + a * b * T * T + b * b * T**3 / 3
            total = sq + 2 * cross + affine
            return gmpy2.sqrt(total) if total > 0 else mpfr(0)


def gram_matrix(rates: Sequence, T, precision: Precision = DEFAULT_PRECISION) -> list:
    """G_kl = int_0^T exp(-lam_k (T-t)) exp(-lam_l (T-t)) dt, all entries in (0, T]."""
    with precision.context():
        T = mpfr(T)
        rs = [precision.mpf(r) for r in rates]
        return [[gram_entry(a + b, T) for b in rs] for a in rs]


def cholesky(A: Sequence[Sequence], precision: Precision = DEFAULT_PRECISION) -> list:
    """Lower-triangular L with A = L L^T; a nonpositive pivot means precision ran out."""
    n = len(A)
    L = [[mpfr(0)] * n for _ in range(n)]
    with precision.context():
        for i in range(n):
            for j in range(i + 1):
                s = A[i][j] - sum((L[i][k] * L[j][k] for k in range(j)), mpfr(0))
                if i == j:
                    if not s > 0:
                        raise PrecisionExhaustedError(
                            f"Cholesky pivot {i} is {float(s):.3e}; raise mantissa_bits or lower K"
                        )
                    L[i][i] = gmpy2.sqrt(s)
                else:
                    L[i][j] = s / L[j][j]
    return L


def cho_solve(L: Sequence[Sequence], b: Sequence, precision: Precision = DEFAULT_PRECISION) -> list:
    n = len(L)
    with precision.context():
        y = [mpfr(0)] * n
        for i in range(n):
            y[i] = (b[i] - sum((L[i][k] * y[k] for k in range(i)), mpfr(0))) / L[i][i]
        x = [mpfr(0)] * n
        for i in reversed(range(n)):
            x[i] = (y[i] - sum((L[k][i] * x[k] for k in range(i + 1, n)), mpfr(0))) / L[i][i]
    return x


def _refined_solve(G, L, b, precision: Precision) -> list:
    x = cho_solve(L, b, precision)
    # one step of iterative refinement, residual taken at double the working precision
    with precision.context(precision.mantissa_bits):
        r = [b[i] - sum((G[i][j] * x[j] for j in range(len(x))), mpfr(0)) for i in range(len(x))]
    dx = cho_solve(L, r, precision)
    with precision.context():
        return [xi + di for xi, di in zip(x, dx)]


def _norm1(A) -> float:
    n = len(A)
    return max(sum(abs(float(A[i][j])) for i in range(n)) for j in range(n))


@dataclass(frozen=True)
class BiorthogonalFamily:
    T: mpfr
    lambdas: tuple
    rates: tuple
    sigmas: tuple
    gram_condition: float
    precision: Precision
    zero_mean: bool = True
    biorth_residual: float = 0.0
    zero_mean_residual: float = 0.0
    pivots: tuple = field(default=(), repr=False)

    @property
    def K(self) -> int:
        return len(self.lambdas)

    def sigma(self, k: int) -> ExponentialSum:
        return self.sigmas[k - 1]

    def to_dict(self) -> dict:
        return {
            "T": str(self.T),
            "K": self.K,
            "mantissa_bits": self.precision.mantissa_bits,
            "zero_mean": self.zero_mean,
            "rates": [str(r) for r in self.rates],
            "coefficients": [[str(c) for c in s.coeffs] for s in self.sigmas],
            "gram_condition": repr(self.gram_condition),
            "biorthogonality_residual": repr(self.biorth_residual),
            "zero_mean_residual": repr(self.zero_mean_residual),
        }


def build_family(
    lambdas: Sequence,
    T,
    precision: Precision = DEFAULT_PRECISION,
    zero_mean: bool = True,
) -> BiorthogonalFamily:
    """Minimum-norm sigma_k in span{1, exp(-lam_l (T-t))} solving the scaled moment system.

    Row 0 (rate 0) imposes zero mean; row l >= 1 imposes
    ``int sigma_k exp(-lam_l (T-t)) dt = delta_kl exp(-lam_l T)``.
    """
    K = len(lambdas)
    if not 1 <= K <= K_MAX:
        raise DomainError(f"K must lie in [1, {K_MAX}], got {K}")
    if precision.mantissa_bits < 128 and K > 6:
        raise PrecisionExhaustedError("double-precision families are limited to K <= 6")
    bits = precision.mantissa_bits
    with precision.context():
        T = precision.mpf(T)
        lams = tuple(precision.mpf(l) for l in lambdas)
        if any(l <= 0 for l in lams) or len(set(lams)) != K:
            raise DomainError("rates must be positive and distinct")
        rates = ((mpfr(0),) if zero_mean else ()) + lams
        offset = 1 if zero_mean else 0
        G = gram_matrix(rates, T, precision)
        L = cholesky(G, precision)
        n = len(rates)
        inv_cols = [_refined_solve(G, L, [mpfr(int(i == j)) for i in range(n)], precision) for j in range(n)]
        cond = _norm1(G) * _norm1(inv_cols)
        if not cond <= 2.0 ** (bits - 20):
            raise PrecisionExhaustedError(
                f"Gram condition {cond:.3e} exceeds 2^{bits - 20}; raise mantissa_bits or lower K"
            )
        sigmas, worst_bi, worst_mean = [], 0.0, 0.0
        for k in range(K):
            rhs = [mpfr(0)] * n
            rhs[k + offset] = gmpy2.exp(-lams[k] * T)
            c = _refined_solve(G, L, rhs, precision)
            scale = gmpy2.sqrt(sum(ci * ci for ci in c)) * T
            for l in range(n):
                res = sum((c[j] * G[j][l] for j in range(n)), mpfr(0)) - rhs[l]
                rel = float(abs(res) / scale)
                if zero_mean and l == 0:
                    worst_mean = max(worst_mean, rel)
                else:
                    worst_bi = max(worst_bi, rel)
            sigmas.append(ExponentialSum(T, rates, tuple(c), precision))
        pivots = tuple(L[i][i] for i in range(n))
    return BiorthogonalFamily(
        T, lams, rates, tuple(sigmas), cond, precision, zero_mean, worst_bi, worst_mean, pivots
    )


def scaled_moment(sigma: ExponentialSum, lam, T=None) -> mpfr:
    if T is not None and mpfr(T, sigma.precision.mantissa_bits) != sigma.T:
        raise MismatchError("horizon does not match the exponential sum")
    return sigma.scaled_moment(lam)


def l2_norm(sigma: ExponentialSum) -> mpfr:
    return sigma.l2_norm()


class NormFit(NamedTuple):
    C: float
    P: float
    r2: float
    residuals: tuple
    scaled_norms: tuple
    lower_bounds: tuple


def estimate_fit(family: BiorthogonalFamily) -> NormFit:
    """Fit log(||sigma_k|| e^{lam_k T}) = log C + P sqrt(lam_k) by least squares.

    ``lower_bounds`` holds the Cauchy-Schwarz floor 1/sqrt(G_kk) of each
    scaled norm.
    """
    if family.K < 4:
        raise DomainError("the norm fit needs at least four modes")
    T = family.T
    with family.precision.context():
        logs = [float(gmpy2.log(s.l2_norm()) + lam * T) for s, lam in zip(family.sigmas, family.lambdas)]
        floors = tuple(float(1 / gmpy2.sqrt(gram_entry(2 * lam, T))) for lam in family.lambdas)
    x = np.array([math.sqrt(float(l)) for l in family.lambdas])
    y = np.array(logs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return NormFit(
        math.exp(intercept), float(slope), r2, tuple(resid.tolist()), tuple(np.exp(y).tolist()), floors
    )
