"""Cost sweeps, target structure, and the map to a degenerate equation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .biortho import build_family, gram_entry
from .control import ControlProblem, coupling_coefficients, synthesize
from .errors import DomainError, HardyHeatError, MagnitudeError, PrecisionError
from .specfun import DEFAULT_PRECISION, Precision, ZeroCache
from .spectrum import PotentialParams, Spectrum, build_spectrum, derive_params, eigenfunction_values

# ----------------------------------------------------------------- cost sweeps


@dataclass(frozen=True)
class CostRow:
    mu: float
    T: float
    K: int
    h1_norm: float
    product: float  # h1_norm * sqrt(1 - 4 mu)
    lower_bound: float
    skipped: str = ""

    @property
    def ok(self) -> bool:
        return not self.skipped


@dataclass(frozen=True)
class CostTable:
    rows: tuple
    exponent: float
    r2: float
    target_exponent: float = -0.5

    @property
    def deviation(self) -> float:
        return self.exponent - self.target_exponent

    @property
    def flagged(self) -> bool:
        """True when the fitted exponent misses -1/2 by more than 0.1."""
        return not abs(self.deviation) <= 0.1


def _fit_line(xs, ys) -> tuple:
    """Least-squares slope, intercept and R^2."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) < 2:
        return math.nan, math.nan, math.nan
    A = np.vstack([xs, np.ones_like(xs)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    fitted = A @ [slope, icept]
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1 - float(np.sum((ys - fitted) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icept), r2


def cauchy_schwarz_bound(spectrum: Spectrum, T, rho0_1, coupling: str = "trace") -> float:
    """Lower bound on ||f||_{L^2} from the first moment equation alone.

    The k = 1 condition pins int f e^{lam_1 t} dt = -rho0_1 / b_1, so
    ||f|| >= |rho0_1| e^{-lam_1 T} / (b_1 sqrt(G_11)).
    """
    p = spectrum.precision
    b1 = coupling_coefficients(spectrum, coupling)[0]
    with p.context():
        lam = spectrum.lambdas[0]
        T = p.mpf(T)
        return float(abs(p.mpf(rho0_1)) * gmpy2.exp(-lam * T) / (abs(b1) * gmpy2.sqrt(gram_entry(2 * lam, T))))


def null_control_norm(mu, T, u0_modal: Sequence, K: int, precision: Precision, cache=None, coupling="trace"):
    spectrum = build_spectrum(derive_params(mu, precision), K, precision, cache)
    rho0 = list(u0_modal) + [0] * (K - len(u0_modal))
    problem = ControlProblem.create(spectrum, T, rho0)
    family = build_family(spectrum.lambdas, problem.T, precision)
    control = synthesize(problem, family, coupling)
    return spectrum, control


def cost_sweep(
    mu_list: Sequence,
    T,
    u0_modal: Sequence,
    K: int,
    precision: Precision = DEFAULT_PRECISION,
    cache: ZeroCache | None = None,
    coupling: str = "trace",
) -> CostTable:
    rows = []
    for mu in sorted(mu_list, key=float):
        m = float(mu)
        try:
            spectrum, control = null_control_norm(mu, T, u0_modal, K, precision, cache, coupling)
        except (PrecisionError, MagnitudeError) as exc:
            rows.append(CostRow(m, float(T), K, math.nan, math.nan, math.nan, skipped=type(exc).__name__))
            continue
        norm = float(control.h1_norm)
        rows.append(
            CostRow(
                m, float(T), K, norm, norm * math.sqrt(1 - 4 * m),
                cauchy_schwarz_bound(spectrum, T, u0_modal[0], coupling),
            )
        )
    good = [r for r in rows if r.ok and r.h1_norm > 0]
    slope, _, r2 = _fit_line([math.log(1 - 4 * r.mu) for r in good], [math.log(r.h1_norm) for r in good])
    return CostTable(tuple(rows), slope, r2)


@dataclass(frozen=True)
class TimeTable:
    mu: float
    rows: tuple  # (T, h1_norm)
    C_fit: float
    r2: float


def time_sweep(
    mu,
    T_list: Sequence,
    u0_modal: Sequence,
    K: int,
    precision: Precision = DEFAULT_PRECISION,
    cache: ZeroCache | None = None,
    fit_points: int = 3,
    coupling: str = "trace",
) -> TimeTable:
    """h1 norms across horizons; C_fit is the slope of log||f|| against 1/T over the smallest T's."""
    Ts = [float(T) for T in T_list]
    if any(not T > 0 for T in Ts):
        raise DomainError("horizons must be positive")
    rows = []
    for T, raw in sorted(zip(Ts, T_list), reverse=True):
        _, control = null_control_norm(mu, raw, u0_modal, K, precision, cache, coupling)
        rows.append((T, float(control.h1_norm)))
    tail = rows[-fit_points:] if fit_points else rows
    slope, _, r2 = _fit_line([1 / T for T, _ in tail], [math.log(n) for _, n in tail])
    return TimeTable(float(mu), tuple(rows), slope, r2)


# ------------------------------------------------------------ target structure

L_SERIES_CAP = 200


def l_series(nu, y, precision: Precision = DEFAULT_PRECISION, cap: int = L_SERIES_CAP) -> mpfr:
    """L_nu(y) = sum_m (-1)^m y^(2m) / (m! 2^(2m+nu) Gamma(m+nu+1)), so that J_nu(y) = y^nu L_nu(y)."""
    y = abs(float(y)) if not isinstance(y, type(mpfr(0))) else abs(y)
    guard = math.ceil(float(y) * math.log2(math.e)) + 24
    with precision.context(guard):
        nu = mpfr(nu)
        y = mpfr(y)
        h2 = y * y / 4
        term = 1 / (2**nu * gmpy2.gamma(nu + 1))
        total = term
        for m in range(1, cap + 1):
            term *= -h2 / (m * (m + nu))
            total += term
            if m * (m + nu) > h2 and abs(term) <= precision.series_tol * abs(total):
                return mpfr(total, precision.mantissa_bits)
    raise PrecisionError(f"L_nu series did not converge within {cap} terms at y = {float(y):.4g}; raise the term cap")


def target_series_F(rhoT: Sequence, spectrum: Spectrum, x, cap: int = L_SERIES_CAP) -> mpfr:
    """F(x) = sum_k rhoT_k C_k j_k^nu L_nu(j_k x), with u_T(x) = x^(nu + 1/2) F(x)."""
    p = spectrum.precision
    nu = spectrum.params.nu
    with p.context():
        x = mpfr(x)
        if not 0 <= x < 1:
            raise DomainError("F is evaluated on [0, 1)")
        total = mpfr(0)
        for rho, m in zip(rhoT, spectrum.modes):
            if rho:
                total += p.mpf(rho) * m.c_norm * m.j**nu * l_series(nu, m.j * x, p, cap)
        return total


def series_coefficients(rhoT: Sequence, spectrum: Spectrum, n: int) -> list:
    """Taylor coefficients a_m of F(x) = sum_m a_m x^(2m), m < n."""
    p = spectrum.precision
    nu = spectrum.params.nu
    with p.context(64):
        coeffs = []
        for m in range(n):
            denom = gmpy2.factorial(m) * 2 ** (2 * m + nu) * gmpy2.gamma(m + nu + 1)
            s = sum(
                (p.mpf(rho) * md.c_norm * md.j**nu * md.j ** (2 * m) for rho, md in zip(rhoT, spectrum.modes) if rho),
                mpfr(0),
            )
            coeffs.append((-1) ** m * s / denom)
        return coeffs


def disc_ratio_check(rhoT: Sequence, spectrum: Spectrum, P: float, n: int = 60, tail: int = 10) -> tuple:
    """Ratios |a_{m+1} / a_m| over the last ``tail`` coefficients against (pi / P)^2."""
    a = series_coefficients(rhoT, spectrum, n)
    ratios = [float(abs(a[m + 1] / a[m])) for m in range(n - tail - 1, n - 1) if a[m] != 0]
    bound = (math.pi / P) ** 2
    return ratios, bound, all(r < bound for r in ratios)


def leading_exponent(u_target: Callable, x_probe: Sequence = (1e-2, 1e-3, 1e-4)) -> float:
    """Least-squares slope of log|u_T| against log x over the probe points."""
    vals = [abs(float(u_target(x))) for x in x_probe]
    pts = [(math.log(x), math.log(v)) for x, v in zip(x_probe, vals) if v > 0]
    if len(pts) < 2:
        raise HardyHeatError("u_T vanishes at the probe points; no exponent can be fitted")
    slope, _, _ = _fit_line(*zip(*pts))
    return slope


# -------------------------------------------------------- degenerate transform


@dataclass(frozen=True)
class DegenerateMap:
    mu: mpfr
    beta: mpfr
    a: mpfr
    xi0: mpfr | None  # undefined once beta > 2 (mu < -3/4)
    precision: Precision = DEFAULT_PRECISION

    @property
    def exponent(self) -> mpfr:
        """xi = xi0 x^exponent with exponent = 2/(2 - beta)."""
        with self.precision.context():
            return 2 / (2 - self.beta)

    def xi_of_x(self, x):
        self._require()
        x = np.asarray(x, dtype=float)
        return float(self.xi0) * x ** float(self.exponent)

    def x_of_xi(self, xi):
        self._require()
        xi = np.asarray(xi, dtype=float)
        return (xi / float(self.xi0)) ** (1 / float(self.exponent))

    def _require(self):
        if self.xi0 is None:
            raise DomainError(f"mu = {float(self.mu):g} gives beta > 2; the xi variable is undefined")

    def identity_residuals(self) -> tuple:
        """(|a - alpha(mu)|, |mu + a (a - 1)|)."""
        params = derive_params(self.mu, self.precision)
        with self.precision.context():
            return float(abs(self.a - params.alpha)), float(abs(self.mu + self.a * (self.a - 1)))


def degenerate_map(mu, precision: Precision = DEFAULT_PRECISION) -> DegenerateMap:
    m = precision.mpf(mu)
    with precision.context():
        if m >= mpfr("0.25"):
            raise DomainError("the degenerate map requires mu < 1/4")
        if m == mpfr("-0.75"):
            raise DomainError("mu = -3/4 is an excluded point: 3 + 4 mu = 0 and beta has a pole there")
        s = gmpy2.sqrt(1 - 4 * m)
        # (2 + 8 mu - 2 s) rewritten with 2 - 2 s = 8 mu / (1 + s), free of cancellation
        beta = 8 * m * (2 + s) / ((1 + s) * (3 + 4 * m))
        a = beta / (2 * (2 - beta))
        xi0 = ((2 - beta) / 2) ** (2 / (2 - beta)) if beta < 2 else None
    return DegenerateMap(m, beta, a, xi0, precision)


def transform_samples(u, x_grid, dmap: DegenerateMap) -> tuple:
    """(xi, phi) with phi = x^(-a) u; rows of ``u`` follow ``x_grid``."""
    xs = np.asarray(x_grid, dtype=float)
    u = np.asarray(u, dtype=float)
    scale = xs ** (-float(dmap.a))
    return dmap.xi_of_x(xs), u * (scale[:, None] if u.ndim == 2 else scale)


def _fd4(v, h):
    """Fourth-order central first and second differences at interior points 2..n-3."""
    d1 = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d2 = (-v[:-4] + 16 * v[1:-3] - 30 * v[2:-2] + 16 * v[3:-1] - v[4:]) / (12 * h * h)
    return d1, d2


class GridWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TransformResult:
    xi: np.ndarray
    t: np.ndarray
    phi: np.ndarray = field(repr=False)
    residual: float
    truncation_estimate: float


def transform_solution(
    problem: ControlProblem,
    control,
    dmap: DegenerateMap,
    t_grid: Sequence,
    n: int = 2000,
    window: tuple = (0.1, 0.9),
    tol: float = 1e-4,
) -> TransformResult:
    """phi(xi, t) on a uniform xi grid and the residual of phi_t - (xi^beta phi_xi)_xi.

    Time derivatives come from the modal equations exactly; space derivatives
    use fourth-order central differences.  ``control`` may be None for a
    free decay.  The window is a fraction of (0, xi0].
    """
    from .simulate import _source_weights, beta_at, lift

    if n < 10:
        raise DomainError("the xi grid needs at least 10 points")
    xi0 = float(dmap.xi0) if dmap.xi0 is not None else dmap._require()
    xi = np.linspace(window[0] * xi0, window[1] * xi0, n)
    h = xi[1] - xi[0]
    xs = dmap.x_of_xi(xi)
    a, beta = float(dmap.a), float(dmap.beta)
    spectrum = problem.spectrum
    phi_k = np.array([eigenfunction_values(spectrum, k, xs) for k in range(1, spectrum.K + 1)])
    lifted = lift(problem.params, xs)
    lams = np.array([float(l) for l in spectrum.lambdas])
    weight = xs ** (-a)
    if control is not None:
        w = np.array([float(v) for v in _source_weights(problem, control)])
    phis, res_fine, res_coarse = [], 0.0, 0.0
    for t in t_grid:
        if control is None:
            beta_t = np.array([float(r) for r in problem.rho0]) * np.exp(-lams * float(t))
            f = g = 0.0
        else:
            beta_t = np.array([float(b) for b in beta_at(problem, control, t)])
            f, g = float(control.f_at(t)), float(control.g_at(t))
        u = beta_t @ phi_k + lifted * f
        u_t = (-lams * beta_t - (w * g if control is not None else 0)) @ phi_k + lifted * g
        phi, phi_t = weight * u, weight * u_t
        phis.append(phi)
        res_fine = max(res_fine, _residual(phi, phi_t, xi, h, beta))
        res_coarse = max(res_coarse, _residual(phi[::2], phi_t[::2], xi[::2], 2 * h, beta))
    estimate = abs(res_coarse - res_fine) / 15
    if res_fine > tol and estimate > 0.5 * res_fine:
        warnings.warn(
            f"xi grid too coarse: residual {res_fine:.2e} is dominated by the h^4 truncation estimate {estimate:.2e}",
            GridWarning,
        )
    return TransformResult(xi, np.asarray(t_grid, float), np.array(phis).T, res_fine, estimate)


def _residual(phi, phi_t, xi, h, beta) -> float:
    d1, d2 = _fd4(phi, h)
    z = xi[2:-2]
    flux_div = beta * z ** (beta - 1) * d1 + z**beta * d2
    return float(np.max(np.abs(phi_t[2:-2] - flux_div)))
