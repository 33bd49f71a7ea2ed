"""Gamma, Bessel functions of the first kind and their positive zeros.

Everything above double precision runs on MPFR through :mod:`gmpy2`.  Values
are returned as ``gmpy2.mpfr`` rounded to the caller's working precision;
wrap them in ``float()`` when double precision is enough.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import gmpy2
from gmpy2 import mpfr

from .errors import BracketError, DomainError, PrecisionError

__all__ = [
    "Precision",
    "DEFAULT_PRECISION",
    "DOUBLE",
    "ZeroTable",
    "ZeroCache",
    "gamma",
    "bessel_j",
    "bessel_j_prime",
    "bessel_j_second",
    "bessel_zeros",
    "mcmahon",
    "zero_bounds",
    "local_scale",
]

LOG2E = 1.4426950408889634


@dataclass(frozen=True)
class Precision:
    """Binary working precision plus the relative truncation tolerance of power series."""

    mantissa_bits: int = 256
    series_tol: float | None = None

    def __post_init__(self):
        bits = self.mantissa_bits
        if not isinstance(bits, int) or bits < 53:
            raise DomainError(f"mantissa_bits must be an integer >= 53, got {bits!r}")
        ceiling = 2.0 ** (-bits / 2)
        if self.series_tol is None:
            object.__setattr__(self, "series_tol", 2.0 ** -math.ceil(bits / 2))
        elif not 0 < self.series_tol <= ceiling:
            raise DomainError(f"series_tol must lie in (0, 2^-{bits / 2:g}]")

    def context(self, extra_bits: int = 0):
        return gmpy2.context(precision=self.mantissa_bits + extra_bits)

    def mpf(self, value) -> mpfr:
        """Parse/round ``value`` (str, int, float or mpfr) to this precision."""
        return mpfr(value, self.mantissa_bits)

    @property
    def digits(self) -> int:
        return math.ceil(self.mantissa_bits * math.log10(2)) + 1


DEFAULT_PRECISION = Precision(256)
DOUBLE = Precision(53)


# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _lanczos_gamma(x: float) -> mpfr:
    # MPFR keeps large arguments from overflowing.  The Lanczos error grows
    # with the argument, so x > 12 is shifted down and recovered with the
    # recurrence Gamma(x) = (x-1) Gamma(x-1), carried on 16 guard bits.
    with gmpy2.context(precision=69):
        if x < 0.5:
            return mpfr(_lanczos_gamma(x + 1.0) / mpfr(x), 53)
        shift = max(0, math.ceil(x - 12))
        z = mpfr(x) - shift - 1
        acc = mpfr(_LANCZOS[0])
        for i, p in enumerate(_LANCZOS[1:], start=1):
            acc += mpfr(p) / (z + i)
        t = z + _LANCZOS_G + 0.5
        val = gmpy2.sqrt(2 * gmpy2.const_pi()) * t ** (z + 0.5) * gmpy2.exp(-t) * acc
        for i in range(shift):
            val *= z + 1 + i
    return mpfr(val, 53)


def gamma(x, precision: Precision = DOUBLE) -> mpfr:
    """Euler Gamma function for ``0 < x <= 200``.

    At 53 bits a fixed-coefficient Lanczos formula is used (relative error
    below 1e-13); wider precisions defer to MPFR's correctly rounded gamma.
    """
    xv = float(x)
    if not xv > 0:
        raise DomainError(f"gamma requires x > 0, got {x}")
    if xv > 200:
        raise DomainError(f"gamma is only supported for x <= 200, got {x}")
    if precision.mantissa_bits == 53:
        return _lanczos_gamma(xv)
    with precision.context():
        return gmpy2.gamma(mpfr(x))


def local_scale(nu, x) -> float:
    """Envelope of |J_nu| near ``x``: the leading power at small x, sqrt(2/(pi x)) beyond."""
    nu, x = float(nu), float(x)
    if x == 0:
        return 1.0
    lead = math.exp(nu * (math.log(x) - math.log(2)) - math.lgamma(nu + 1))
    return min(lead, math.sqrt(2 / (math.pi * x)))


def _guard_bits(x: float) -> int:
    # The largest series term is bounded by e^x.
    return int(math.ceil(x * LOG2E)) + 24


def _j_series(nu: mpfr, x: mpfr, tol: float, cap: int):
    """Sum the defining series in the current context; returns (sum, largest term, terms)."""
    h = x / 2
    h2 = h * h
    term = h**nu / gmpy2.gamma(nu + 1)
    total = term
    biggest = abs(term)
    m = 0
    while True:
        m += 1
        term = -term * h2 / (m * (m + nu))
        total += term
        size = abs(term)
        if size > biggest:
            biggest = size
        # only stop once the terms decrease, so the alternating tail is below |term|
        if m * (m + nu) > h2 and size <= tol * abs(total):
            return total, biggest, m
        if m >= cap:
            return total, biggest, m


def bessel_j(nu, x, precision: Precision = DEFAULT_PRECISION, *, guard: bool = True) -> mpfr:
    """J_nu(x) for nu >= 0 and 0 <= x <= 500 from the power series.

    With ``guard`` (the default) the series is summed with enough extra bits
    to absorb the cancellation between its terms.  Without it, cancellation
    that eats into ``series_tol`` raises :class:`PrecisionError`.
    """
    xf = float(x)
    if float(nu) < 0:
        raise DomainError("negative orders are not supported")
    if xf < 0 or xf > 500:
        raise DomainError(f"bessel_j needs 0 <= x <= 500, got {xf}")
    bits = precision.mantissa_bits
    if xf == 0:
        return mpfr(1 if float(nu) == 0 else 0, bits)
    extra = _guard_bits(xf) if guard else 0
    work = bits + extra
    with gmpy2.context(precision=work):
        nu_ = mpfr(nu)
        total, biggest, m = _j_series(nu_, mpfr(x), precision.series_tol, cap=int(2 * xf) + 400)
        scale = max(abs(float(total)), local_scale(nu, xf))
        rounding = float(biggest) * m * 2.0 ** (-work)
    if rounding > precision.series_tol * scale:
        raise PrecisionError(
            f"J_{float(nu):g}({xf:g}): cancellation leaves ~{rounding / scale:.1e} relative error "
            f"at {work} bits; raise mantissa_bits"
        )
    return mpfr(total, bits)


def bessel_j_prime(nu, x, precision: Precision = DEFAULT_PRECISION) -> mpfr:
    """J_nu'(x) = (nu/x) J_nu(x) - J_{nu+1}(x), for x > 0."""
    if float(x) <= 0:
        raise DomainError("bessel_j_prime needs x > 0")
    with precision.context(8):
        nu_, x_ = mpfr(nu), mpfr(x)
        val = nu_ / x_ * bessel_j(nu_, x_, precision) - bessel_j(nu_ + 1, x_, precision)
    return mpfr(val, precision.mantissa_bits)


def bessel_j_second(nu, x, precision: Precision = DEFAULT_PRECISION) -> mpfr:
    """J_nu''(x), assembled by applying the derivative recurrence twice."""
    if float(x) <= 0:
        raise DomainError("bessel_j_second needs x > 0")
    with precision.context(8):
        nu_, x_ = mpfr(nu), mpfr(x)
        j0 = bessel_j(nu_, x_, precision)
        j1 = bessel_j(nu_ + 1, x_, precision)
        d0 = nu_ / x_ * j0 - j1
        # J_{nu+1}' = J_nu - (nu+1)/x J_{nu+1}
        d1 = j0 - (nu_ + 1) / x_ * j1
        val = -nu_ / (x_ * x_) * j0 + nu_ / x_ * d0 - d1
    return mpfr(val, precision.mantissa_bits)


def mcmahon(nu, k: int) -> float:
    """Two-term McMahon approximation of the k-th positive zero of J_nu."""
    b = (k + float(nu) / 2 - 0.25) * math.pi
    return b - (4 * float(nu) ** 2 - 1) / (8 * b)


def zero_bounds(nu, k: int) -> tuple[float, float]:
    """Two-sided enclosure of j_{nu,k}; the regime switches at nu = 1/2."""
    nu = float(nu)
    a = math.pi * (k + nu / 2 - 0.25)
    b = math.pi * (k + nu / 4 - 0.125)
    return (a, b) if nu <= 0.5 else (b, a)


@dataclass(frozen=True)
class ZeroTable:
    nu: mpfr
    zeros: tuple
    precision: Precision = field(default=DEFAULT_PRECISION)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.zeros, self.zeros[1:])):
            raise BracketError("zeros are not strictly increasing")

    def __len__(self):
        return len(self.zeros)

    def __getitem__(self, i):
        return self.zeros[i]


class ZeroCache:
    """JSON cache of zero tables, shared safely between processes.

    Entries are keyed by nu rounded to 12 decimals, K and mantissa bits;
    the full-precision nu is stored too and must match on lookup.
    """

    ENV = "HARDYHEAT_CACHE_DIR"

    def __init__(self, path):
        self.path = Path(path)

    @classmethod
    def from_env(cls, default=None) -> "ZeroCache | None":
        root = os.environ.get(cls.ENV, default)
        return cls(Path(root) / "zeros.json") if root else None

    @staticmethod
    def key(nu, K: int, bits: int) -> str:
        return f"{float(nu):.12f}|{K}|{bits}"

    def _load(self) -> dict:
        try:
            with open(self.path) as fh:
                return json.load(fh)
        except FileNotFoundError:
            return {}
        except json.JSONDecodeError:
            return {}

    def get(self, nu, K: int, precision: Precision):
        entry = self._load().get(self.key(nu, K, precision.mantissa_bits))
        if entry is None or entry.get("nu") != str(mpfr(nu, precision.mantissa_bits)):
            return None
        return tuple(precision.mpf(z) for z in entry["zeros"])

    def put(self, table: ZeroTable) -> None:
        from filelock import FileLock

        self.path.parent.mkdir(parents=True, exist_ok=True)
        bits = table.precision.mantissa_bits
        with FileLock(str(self.path) + ".lock"):
            data = self._load()
            data[self.key(table.nu, len(table), bits)] = {
                "nu": str(mpfr(table.nu, bits)),
                "zeros": [str(z) for z in table.zeros],
            }
            fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".zeros-", suffix=".json")
            try:
                with os.fdopen(fd, "w") as fh:
                    json.dump(data, fh, indent=1, sort_keys=True)
                os.replace(tmp, self.path)
            except BaseException:
                os.unlink(tmp)
                raise


def _newton_zero(nu: mpfr, k: int, precision: Precision) -> mpfr:
    lo, hi = zero_bounds(nu, k)
    slack = 1e-9 * hi
    bits = precision.mantissa_bits
    work = Precision(bits + 16)  # a little headroom for the iteration itself
    x = mpfr(mcmahon(nu, k), work.mantissa_bits)
    stop = 2.0 ** (-(bits + 4)) * hi
    inside = True
    for _ in range(100):
        fx = bessel_j(nu, x, work)
        dfx = bessel_j_prime(nu, x, work)
        with work.context():
            step = fx / dfx
            x = x - step
        if not lo - slack <= float(x) <= hi + slack:
            inside = False
            break
        if abs(float(step)) <= stop:
            break
    if not inside:
        x = _bisect_zero(nu, lo - 0.1, hi + 0.1, work)
    return mpfr(x, bits)


def _bisect_zero(nu, a: float, b: float, precision: Precision) -> mpfr:
    with precision.context():
        a, b = mpfr(a), mpfr(b)
        fa = bessel_j(nu, a, precision)
        if fa * bessel_j(nu, b, precision) > 0:
            raise BracketError(f"no sign change of J_{float(nu):g} on [{float(a)}, {float(b)}]")
        for _ in range(precision.mantissa_bits + 8):
            mid = (a + b) / 2
            fm = bessel_j(nu, mid, precision)
            if fm == 0:
                return mid
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
        return (a + b) / 2


def bessel_zeros(
    nu, K: int, precision: Precision = DEFAULT_PRECISION, cache: ZeroCache | None = None
) -> ZeroTable:
    """First ``K`` positive zeros of J_nu (nu >= 0, K <= 200).

    Newton's method is seeded with McMahon's expansion; every root is checked
    against its analytic enclosure and against the size of J_nu there.
    """
    if float(nu) < 0:
        raise DomainError("zeros are only computed for nu >= 0")
    if not 1 <= K <= 200:
        raise DomainError(f"K must lie in [1, 200], got {K}")
    nu = precision.mpf(nu)
    if cache is not None:
        hit = cache.get(nu, K, precision)
        if hit is not None:
            return ZeroTable(nu, hit, precision)
    zeros = []
    for k in range(1, K + 1):
        z = _newton_zero(nu, k, precision)
        lo, hi = zero_bounds(nu, k)
        eps = 1e-12 * hi
        if not lo - eps <= float(z) <= hi + eps:
            raise BracketError(f"j_{{{float(nu):g},{k}}} = {float(z)} escapes [{lo}, {hi}]")
        jz = abs(float(bessel_j(nu, z, precision)))
        slope = abs(float(bessel_j_prime(nu, z, precision)))
        tol = precision.series_tol
        if jz > 10 * tol * max(1.0, slope * float(z) * tol) * max(1.0, local_scale(nu, z)):
            raise PrecisionError(f"|J_nu| = {jz:.3e} at computed zero k={k}")
        zeros.append(z)
    table = ZeroTable(nu, tuple(zeros), precision)
    if cache is not None:
        cache.put(table)
    return table
