"""Modal simulation of the controlled equation.

Writing u = psi + x^alpha p(x) f(t) with p(x) = 1 - x^(1 - 2 alpha) moves the
boundary datum into a source term.  Mode k of psi then obeys

    beta_k' = -lam_k beta_k - (b_k / lam_k) g(t),   beta_k(0) = rho0_k,

which is integrated in closed form because g is an exponential sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .biortho import gram_entry
from .control import ControlProblem, SynthesizedControl, coupling_coefficients
from .errors import DomainError, MismatchError
from .quad import gauss_legendre
from .specfun import DEFAULT_PRECISION, Precision, zero_bounds
from .spectrum import PotentialParams, Spectrum, eigenfunction, eigenfunction_matrix, leading_coefficient

X_MIN = 1e-6


@dataclass(frozen=True)
class SimulationReport:
    beta_T: tuple
    terminal_error_l2: float
    tail_bound: float
    crosscheck: float | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def error_bound(self) -> float:
        """Modal distance plus the bound on the uncontrolled tail."""
        return self.terminal_error_l2 + self.tail_bound

    def to_dict(self) -> dict:
        out = {
            "beta_T": [str(b) for b in self.beta_T],
            "terminal_error_l2": repr(self.terminal_error_l2),
            "tail_bound": repr(self.tail_bound),
        }
        if self.crosscheck is not None:
            out["crosscheck_deviation"] = repr(self.crosscheck)
        return out


def _check(problem: ControlProblem, control: SynthesizedControl):
    if control.T != problem.T:
        raise MismatchError("control and problem use different horizons")
    lams = set(problem.spectrum.lambdas)
    if not all(r == 0 or r in lams for r in control.g.rates):
        raise MismatchError("control rates do not match the spectrum's eigenvalues")


def _source_weights(problem: ControlProblem, control: SynthesizedControl) -> list:
    p = problem.spectrum.precision
    with p.context():
        return [b / lam for b, lam in zip(coupling_coefficients(problem.spectrum, control.coupling), problem.spectrum.lambdas)]


def beta_at(problem: ControlProblem, control: SynthesizedControl, t) -> list:
    """beta_k(t) for every mode, by variation of constants with horizon t."""
    _check(problem, control)
    p = problem.spectrum.precision
    weights = _source_weights(problem, control)
    with p.context():
        t = mpfr(t)
        T = problem.T
        if T < t <= T * (1 + mpfr(2) ** -50):
            t = T  # a double-rounded endpoint
        if not 0 <= t <= T:
            raise DomainError("t must lie in [0, T]")
        out = []
        for lam, w, r0 in zip(problem.spectrum.lambdas, weights, problem.rho0):
            # int_0^t g(s) e^{-lam (t - s)} ds, one bounded factor per term of g
            conv = sum(
                (c * gmpy2.exp(-r * (T - t)) * gram_entry(r + lam, t) for r, c in control.g.terms), mpfr(0)
            )
            out.append(r0 * gmpy2.exp(-lam * t) - w * conv)
        return out


def tail_bound(problem: ControlProblem) -> float:
    """||u0 - Pi_K u0|| e^{-lam_{K+1} T}, with lam_{K+1} from the lower zero bound."""
    if problem.tail_norm == 0:
        return 0.0
    lo, _ = zero_bounds(float(problem.params.nu), problem.K + 1)
    return problem.tail_norm * math.exp(-lo * lo * float(problem.T))


def terminal_state(problem: ControlProblem, control: SynthesizedControl) -> SimulationReport:
    _check(problem, control)
    p = problem.spectrum.precision
    weights = _source_weights(problem, control)
    with p.context():
        T = problem.T
        beta = [
            r0 * gmpy2.exp(-lam * T) - w * control.g.scaled_moment(lam)
            for lam, w, r0 in zip(problem.spectrum.lambdas, weights, problem.rho0)
        ]
        err = gmpy2.sqrt(sum(((b - rT) ** 2 for b, rT in zip(beta, problem.rhoT)), mpfr(0)))
    return SimulationReport(tuple(beta), float(err), tail_bound(problem))


def step_crosscheck(problem: ControlProblem, control: SynthesizedControl, steps: int = 10_000) -> float:
    """Largest modal gap between an exponential-integrator march and the closed form.

    Each step propagates beta by e^{-lam dt} and adds the exact integral of
    the source over the step.  Everything runs at working precision.
    """
    if steps < 10_000:
        raise DomainError("step_crosscheck needs at least 10^4 steps")
    _check(problem, control)
    p = problem.spectrum.precision
    weights = _source_weights(problem, control)
    closed = terminal_state(problem, control).beta_T
    with p.context():
        T = problem.T
        dt = T / steps
        lams = problem.spectrum.lambdas
        terms = control.g.terms
        decay = [gmpy2.exp(-lam * dt) for lam in lams]
        # per-step source integral of term l for mode k, relative to its value at the step end
        q = [[w * c * gram_entry(r + lam, dt) for r, c in terms] for lam, w in zip(lams, weights)]
        grow = [gmpy2.exp(r * dt) for r, _ in terms]
        level = [gmpy2.exp(-r * T) for r, _ in terms]  # e^{-r (T - t_n)}
        beta = list(problem.rho0)
        for _ in range(steps):
            level = [e * s for e, s in zip(level, grow)]
            beta = [d * b - sum(a * e for a, e in zip(row, level)) for d, b, row in zip(decay, beta, q)]
        return max(float(abs(a - b)) for a, b in zip(beta, closed))


def lift(params: PotentialParams, xs) -> np.ndarray:
    """x^alpha p(x) with p(x) = 1 - x^(1 - 2 alpha)."""
    xs = np.asarray(xs, dtype=float)
    a = float(params.alpha)
    return xs**a - xs ** (1 - a)


def reconstruct(problem: ControlProblem, control: SynthesizedControl, x_grid, t_grid) -> np.ndarray:
    """u(x_i, t_j) = sum_k beta_k(t_j) Phi_k(x_i) + x_i^alpha p(x_i) f(t_j)."""
    xs = np.asarray(x_grid, dtype=float)
    if np.any(xs < X_MIN) or np.any(xs > 1):
        raise DomainError(f"x grid must lie in [{X_MIN:g}, 1]")
    phi = eigenfunction_matrix(problem.spectrum, xs)
    betas = np.array([[float(b) for b in beta_at(problem, control, t)] for t in t_grid])
    fs = np.array([float(control.f_at(t)) for t in t_grid])
    return phi.T @ betas.T + np.outer(lift(problem.params, xs), fs)


def weighted_trace(problem: ControlProblem, control: SynthesizedControl, x, t) -> mpfr:
    """x^{-alpha} u(x, t) at working precision; tends to f(t) as x -> 0+."""
    p = problem.spectrum.precision
    beta = beta_at(problem, control, t)
    with p.context():
        x = mpfr(x)
        a = problem.params.alpha
        modal = sum((b * eigenfunction(problem.spectrum, k, x) for k, b in enumerate(beta, 1)), mpfr(0))
        return modal * x**-a + (1 - x ** (1 - 2 * a)) * control.f_at(t)


def p_identity_check(params: PotentialParams, x_grid: Sequence, precision: Precision = DEFAULT_PRECISION) -> float:
    """max over x of |(x^a p)'' + mu x^(a-2) p| / (size of the terms).

    With x^a p = x^a - x^(1-a), both pieces are monomials and differentiate
    exactly; the residual is (a(a-1) + mu)(x^(a-2) - x^(-1-a)).
    """
    with precision.context():
        a, mu = params.alpha, params.mu
        worst = 0.0
        for x in x_grid:
            x = mpfr(x)
            if not 0 < x < 1:
                raise DomainError("p identity is checked on (0, 1)")
            d2 = a * (a - 1) * x ** (a - 2) - (1 - a) * (-a) * x ** (-a - 1)
            pot = mu * x ** (a - 2) * (1 - x ** (1 - 2 * a))
            scale = abs(a * (a - 1) * x ** (a - 2)) + abs(a * (1 - a) * x ** (-a - 1)) + abs(pot) + 1
            worst = max(worst, float(abs(d2 + pot) / scale))
        return worst


def source_projection_quadrature(spectrum: Spectrum, nodes: int = 400) -> np.ndarray:
    """<-x^alpha p, Phi_k> for k = 1..K by graded Gauss-Legendre quadrature."""
    x, w = gauss_legendre(nodes)
    phi = eigenfunction_matrix(spectrum, x)
    return -(phi @ (w * lift(spectrum.params, x)))


def source_projection_exact(spectrum: Spectrum) -> tuple:
    """<-x^alpha p, Phi_k> = -2 nu c_k / lam_k, c_k the small-x coefficient of Phi_k."""
    p = spectrum.precision
    with p.context():
        return tuple(
            -2 * spectrum.params.nu * leading_coefficient(spectrum.params, m, p) / m.lam for m in spectrum.modes
        )


def source_projection_trace_form(spectrum: Spectrum) -> tuple:
    """-r_k / lam_k, the value used by the default trace coupling."""
    p = spectrum.precision
    with p.context():
        return tuple(-m.r / m.lam for m in spectrum.modes)
