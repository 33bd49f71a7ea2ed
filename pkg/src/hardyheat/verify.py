"""The invariant suite behind ``hardyheat verify``.

Every check is deterministic: fixed seeds, no timings, fixed-width numbers,
so two runs from the same configuration produce identical reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis, simulate
from .biortho import build_family, estimate_fit, gram_matrix
from .control import ControlProblem, admissibility, fourier_coefficients, synthesize
from .errors import HardyHeatError
from .quad import gauss_legendre
from .specfun import Precision, ZeroCache, bessel_zeros, zero_bounds
from .spectrum import (
    build_spectrum,
    derive_params,
    eigenfunction_values,
    gram_defect,
    hardy_check,
    trace_limit,
)


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.module:<9} {self.name:<44} {self.detail}"


@dataclass(frozen=True)
class VerifyConfig:
    precision_bits: int = 256
    seed: int = 20240611
    cache: ZeroCache | None = None


class _Suite:
    def __init__(self, config: VerifyConfig):
        self.config = config
        self.precision = Precision(config.precision_bits)
        self.checks: list[Check] = []
        self._spectra = {}

    def spectrum(self, mu, K):
        key = (mu, K)
        if key not in self._spectra:
            self._spectra[key] = build_spectrum(derive_params(mu, self.precision), K, self.precision, self.config.cache)
        return self._spectra[key]

    def record(self, module: str, name: str, fn: Callable[[], tuple]):
        try:
            passed, detail = fn()
        except HardyHeatError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        self.checks.append(Check(module, name, bool(passed), detail))

    def scenario(self, mu, T, rhoT1=0.0, K=8, coupling="trace"):
        sp = self.spectrum(mu, K)
        rho0 = [1, 0, 0.5] + [0] * (K - 3)
        problem = ControlProblem.create(sp, T, rho0, [rhoT1] + [0] * (K - 1))
        family = build_family(sp.lambdas, problem.T, self.precision)
        return problem, synthesize(problem, family, coupling)


def _fmt(v: float) -> str:
    return f"{v:.3e}"


def _spectrum_checks(s: _Suite):
    sp = s.spectrum("0", 20)

    def exact():
        err = max(abs(float(lam) / (k * math.pi) ** 2 - 1) for k, lam in enumerate(sp.lambdas, 1))
        return err <= 1e-12, f"max rel err {_fmt(err)}"

    s.record("spectrum", "mu=0 eigenvalues k^2 pi^2 (K=20)", exact)
    for mu in ("0", "-1", "0.2", "0.24"):
        s.record("spectrum", f"gram defect mu={mu} K=20", lambda mu=mu: (
            (d := gram_defect(s.spectrum(mu, 20))) <= 1e-10, f"defect {_fmt(d)}"))
    for nu in (0, 0.1, 0.25, 0.5, 1, 2):
        def bounds(nu=nu):
            zs = [float(z) for z in bessel_zeros(nu, 30, s.precision, s.config.cache).zeros]
            # the enclosure collapses to k pi at nu = 1/2, so allow double rounding
            inside = all(
                lo * (1 - 1e-14) <= z <= hi * (1 + 1e-14)
                for k, z in enumerate(zs, 1)
                for lo, hi in [zero_bounds(nu, k)]
            )
            gaps = np.diff(zs)
            gap = 0.75 * math.pi if nu <= 0.5 else math.pi
            mono = np.all(np.diff(gaps) >= -1e-12) if nu <= 0.5 else np.all(np.diff(gaps) <= 1e-12)
            return inside and gaps.min() >= gap and mono, f"min gap {gaps.min():.6f}"

        s.record("spectrum", f"zero bounds, gaps, monotone gaps nu={nu}", bounds)

    def r_mu0():
        err = max(abs(float(m.r) - math.sqrt(2) * m.k * math.pi) for m in sp.modes[:10])
        return err <= 1e-8, f"max err {_fmt(err)}"

    s.record("spectrum", "mu=0 r_k = sqrt(2) k pi", r_mu0)
    for mu in ("-1", "0.2"):
        def rich(mu=mu):
            spm = s.spectrum(mu, 10)
            err = max(abs(float(trace_limit(spm.params, m, s.precision) / m.r) - 1) for m in spm.modes)
            return err <= 1e-6, f"max rel err {_fmt(err)}"

        s.record("spectrum", f"Richardson trace limit mu={mu}", rich)

    def critical():
        try:
            derive_params("0.3")
        except ValueError as exc:
            return "mu < 1/4" in str(exc), "rejected"
        return False, "accepted"

    s.record("spectrum", "mu=0.3 rejected naming mu < 1/4", critical)

    def hardy():
        rng = np.random.default_rng(s.config.seed)
        ok, worst = True, -math.inf
        for _ in range(100):
            q = np.polynomial.Polynomial(rng.normal(size=rng.integers(1, 6)))
            z = np.polynomial.Polynomial([0, 1, -1]) * q
            res = hardy_check(z)
            ok &= res.holds
            worst = max(worst, res.lhs - res.rhs)
        return ok, f"max lhs-rhs {_fmt(worst)}"

    s.record("spectrum", "Hardy inequality, 100 random polynomials", hardy)


def _biortho_checks(s: _Suite):
    sp = s.spectrum("0", 10)
    fam = build_family(sp.lambdas, s.precision.mpf("0.5"), s.precision)
    s.record("biortho", "biorthogonality K=10 T=0.5", lambda: (
        fam.biorth_residual <= 1e-12, f"scaled residual {_fmt(fam.biorth_residual)}"))
    s.record("biortho", "zero mean K=10 T=0.5", lambda: (
        fam.zero_mean_residual <= 1e-12, f"scaled residual {_fmt(fam.zero_mean_residual)}"))

    def gram_quad():
        G = gram_matrix(fam.rates, fam.T, s.precision)
        # s = T - t, with panels graded toward s = 0 where the large rates live
        s_, w = gauss_legendre(400, panels=20, a=0.0, b=0.5, graded=6)
        E = np.exp(-np.outer([float(r) for r in fam.rates], s_))
        Q = (E * w) @ E.T
        err = max(abs(Q[i, j] / float(G[i][j]) - 1) for i in range(len(G)) for j in range(len(G)))
        return err <= 1e-12, f"max rel err {_fmt(err)}"

    s.record("biortho", "Gram entries by quadrature", gram_quad)

    def fit():
        f = estimate_fit(build_family(s.spectrum("0.2", 10).lambdas, s.precision.mpf(1), s.precision))
        bounded = all(n >= lb for n, lb in zip(f.scaled_norms, f.lower_bounds))
        return f.C > 0 and f.P > 0 and bounded, f"C {f.C:.4f} P {f.P:.4f}"

    s.record("biortho", "norm fit positive, above Gram lower bound", fit)


def _control_checks(s: _Suite):
    for mu in ("-1", "0", "0.2", "0.24"):
        def moments(mu=mu):
            worst = 0.0
            for T in ("0.1", "1"):
                for rT in (0.0, 0.1):
                    pr, c = s.scenario(mu, T, rT)
                    bound = [1e-8 * (1 + abs(float(a)) + abs(float(b))) for a, b in zip(pr.rho0, pr.rhoT)]
                    worst = max(worst, max(r / b for r, b in zip(c.moment_residuals, bound)))
            return worst <= 1, f"residual/tol {_fmt(worst)}"

        s.record("control", f"scaled moment residuals mu={mu}", moments)

    def boundary():
        pr, c = s.scenario("0.2", "1")
        f0, fT = c.boundary_values
        gnorm = float(c.g.l2_norm())
        ok = abs(f0) <= 1e-30 * gnorm and abs(fT) <= 1e-10 * gnorm * math.sqrt(float(pr.T))
        return ok, f"|f(T)| {_fmt(abs(fT))}"

    s.record("control", "f(0) = 0 and f(T) = 0", boundary)

    def linear():
        sp = s.spectrum("0.2", 8)
        rng = np.random.default_rng(s.config.seed + 1)
        fam = build_family(sp.lambdas, s.precision.mpf(1), s.precision)
        a0, b0, a1, b1 = ([s.precision.mpf(v) for v in rng.normal(size=8) * 0.1] for _ in range(4))
        with s.precision.context():
            c0, c1 = [x + y for x, y in zip(a0, b0)], [x + y for x, y in zip(a1, b1)]
        g = lambda r0, rT: synthesize(ControlProblem.create(sp, 1, r0, rT), fam).g
        whole = g(c0, c1)
        err = float((whole - g(a0, a1) - g(b0, b1)).l2_norm() / whole.l2_norm())
        return err <= 1e-30, f"rel err {_fmt(err)}"

    s.record("control", "synthesis is linear", linear)

    def bubble():
        sp = s.spectrum("0", 8)
        proj = fourier_coefficients(lambda x: x * (1 - x), sp)
        exact = [math.sqrt(2) * 2 * (1 - (-1) ** k) / (k * math.pi) ** 3 for k in range(1, 9)]
        err = float(np.max(np.abs(proj.rho - exact)))
        return err <= 1e-10, f"max err {_fmt(err)}"

    s.record("control", "Fourier coefficients of x(1-x), mu=0", bubble)
    s.record("control", "admissibility single mode P=1", lambda: (
        abs(admissibility([1, 0], s.spectrum("0", 2).params, 1.0) - math.exp(math.pi)) <= 1e-12,
        f"{admissibility([1, 0], s.spectrum('0', 2).params, 1.0):.10f}"))

    def sampled_h1():
        pr, c = s.scenario("0.2", "1", K=6)
        t = np.linspace(0, 1, 100_001)
        f, g = c.f.values(t), c.g.values(t)
        num = math.sqrt(np.trapezoid(f**2, t) + np.trapezoid(g**2, t))
        err = abs(num / float(c.h1_norm) - 1)
        return err <= 1e-6, f"rel err {_fmt(err)}"

    s.record("control", "H1 norm vs sampled trapezoid", sampled_h1)


def _simulate_checks(s: _Suite):
    for mu in ("-1", "0", "0.2", "0.24"):
        def null(mu=mu):
            err = dev = 0.0
            for T in ("0.1", "1"):
                pr, c = s.scenario(mu, T)
                err = max(err, simulate.terminal_state(pr, c).terminal_error_l2)
                dev = max(dev, simulate.step_crosscheck(pr, c))
            return err <= 1e-6 and dev <= 1e-10, f"error {_fmt(err)} stepping {_fmt(dev)}"

        s.record("simulate", f"null control terminal state mu={mu}", null)

    def target():
        sp = s.spectrum("0.2", 6)
        pr = ControlProblem.create(sp, 1, [1, 0, 0.5, 0, 0, 0], [0.1] + [0] * 5)
        c = synthesize(pr, build_family(sp.lambdas, pr.T, s.precision))
        err = simulate.terminal_state(pr, c).terminal_error_l2
        return err <= 1e-6, f"error {_fmt(err)}"

    s.record("simulate", "reachable target 0.1 e1, mu=0.2", target)

    def decay():
        sp = s.spectrum("0.2", 8)
        pr = ControlProblem.create(sp, 1, [1, 0, 0.5] + [0] * 5)
        c = synthesize(ControlProblem.create(sp, 1, [0] * 8), build_family(sp.lambdas, pr.T, s.precision))
        beta = simulate.terminal_state(pr, c).beta_T
        bound = math.exp(-float(sp.lambdas[0])) * math.hypot(1, 0.5)
        return math.sqrt(sum(float(b) ** 2 for b in beta)) <= bound, "semigroup bound"

    s.record("simulate", "free decay obeys e^{-lam_1 T}", decay)

    def dirichlet():
        pr, c = s.scenario("0.2", "1")
        u = simulate.reconstruct(pr, c, [1.0], np.linspace(0, 1, 5))
        return float(np.max(np.abs(u))) <= 1e-9, f"max |u(1,t)| {_fmt(float(np.max(np.abs(u))))}"

    s.record("simulate", "u(1, t) = 0", dirichlet)

    def weighted():
        pr, c = s.scenario("0.2", "1")
        t = pr.T / 2
        f = c.f_at(t)
        err = float(abs(simulate.weighted_trace(pr, c, "1e-4", t) - f) / abs(f))
        return err <= 1e-3, f"rel err {_fmt(err)} at x=1e-4"

    s.record("simulate", "weighted trace x^-alpha u -> f, mu=0.2", weighted)
    for mu in ("0", "0.2", "-1"):
        s.record("simulate", f"p identity mu={mu}", lambda mu=mu: (
            (r := simulate.p_identity_check(s.spectrum(mu, 8).params, [i / 10 for i in range(1, 10)])) <= 1e-12,
            f"scaled residual {_fmt(r)}"))
    for mu in ("-1", "0.2"):
        def exact_proj(mu=mu):
            sp = s.spectrum(mu, 8)
            err = _proj_err(sp, simulate.source_projection_exact(sp))
            return err <= 1e-8, f"max err {_fmt(err)}"

        def trace_proj(mu=mu):
            sp = s.spectrum(mu, 8)
            err = _proj_err(sp, simulate.source_projection_trace_form(sp))
            return err <= 1e-8, f"max err {_fmt(err)}"

        s.record("simulate", f"source projection = -2 nu c_k/lam_k mu={mu}", exact_proj)
        s.record("simulate", f"source projection = -r_k/lam_k mu={mu}", trace_proj)

    def consistency():
        pr, c = s.scenario("0.2", "1")
        x, w = gauss_legendre(400, a=simulate.X_MIN)
        u = simulate.reconstruct(pr, c, x, [float(pr.T)])[:, 0]
        psi = u - simulate.lift(pr.params, x) * float(c.f_at(pr.T))
        beta = np.array([float(b) for b in simulate.terminal_state(pr, c).beta_T])
        proj = np.array([eigenfunction_values(pr.spectrum, k, x) @ (w * psi) for k in range(1, 9)])
        err = float(np.max(np.abs(proj - beta)))
        return err <= 1e-8, f"max err {_fmt(err)}"

    s.record("simulate", "reconstruction projects back onto beta(T)", consistency)


def _proj_err(sp, values) -> float:
    q = simulate.source_projection_quadrature(sp)
    return float(np.max(np.abs(q - np.array([float(v) for v in values]))))


def _analysis_checks(s: _Suite):
    mus = ["0", "0.15", "0.22", "0.2475", "0.24975"]
    table = analysis.cost_sweep(mus, 1, [1], 8, s.precision, s.config.cache)
    s.record("analysis", "cost sweep norms finite, above CS bound", lambda: (
        all(r.ok and math.isfinite(r.h1_norm) and r.lower_bound <= r.h1_norm for r in table.rows),
        f"{len(table.rows)} rows"))
    s.record("analysis", "cost exponent fit R^2 >= 0.9", lambda: (
        table.r2 >= 0.9, f"exponent {table.exponent:.4f} R2 {table.r2:.4f} dev {table.deviation:+.4f}"))

    def times():
        tt = analysis.time_sweep("0", [1, 0.5, 0.25, 0.1], [1], 8, s.precision, s.config.cache)
        norms = [n for _, n in tt.rows]
        return all(b > a for a, b in zip(norms, norms[1:])) and tt.C_fit > 0, f"C_fit {tt.C_fit:.4f}"

    s.record("analysis", "time sweep increasing, C_fit > 0", times)
    for mu in ("0", "0.2"):
        def structure(mu=mu):
            sp = s.spectrum(mu, 8)
            rhoT = [0.3, -0.2, 0.1]
            xs = np.linspace(0.05, 0.95, 19)
            phi = np.array([eigenfunction_values(sp, k, xs) for k in (1, 2, 3)])
            direct = np.array(rhoT) @ phi
            nu = float(sp.params.nu)
            via_F = np.array([x ** (nu + 0.5) * float(analysis.target_series_F(rhoT, sp, x)) for x in xs])
            err = float(np.max(np.abs(direct - via_F)))
            return err <= 1e-10, f"max err {_fmt(err)}"

        def exponent(mu=mu):
            sp = s.spectrum(mu, 8)
            slope = analysis.leading_exponent(lambda x: eigenfunction_values(sp, 1, [x])[0])
            err = abs(slope - float(sp.params.nu) - 0.5)
            return err <= 0.01, f"slope {slope:.5f}"

        s.record("analysis", f"u_T = x^(nu+1/2) F(x) mu={mu}", structure)
        s.record("analysis", f"leading exponent nu+1/2 mu={mu}", exponent)

    def separation():
        a = analysis.leading_exponent(lambda x: eigenfunction_values(s.spectrum("0.2", 8), 1, [x])[0])
        return abs(a - 1.0) >= 0.09, f"gap {abs(a - 1.0):.4f}"

    s.record("analysis", "exponent separation mu=0.2 vs 0", separation)

    def dmap():
        rng = np.random.default_rng(s.config.seed + 2)
        worst = 0.0
        for mu in rng.uniform(-5, 0.249, 100):
            if mu == -0.75:
                continue
            worst = max(worst, *analysis.degenerate_map(float(mu), s.precision).identity_residuals())
        return worst <= 1e-13, f"max residual {_fmt(worst)}"

    s.record("analysis", "degenerate map identities, 100 random mu", dmap)

    def beta_limits():
        b0 = float(analysis.degenerate_map(0).beta)
        b14 = float(analysis.degenerate_map("0.2499999999999").beta)
        m = analysis.degenerate_map("0.1875")
        return b0 == 0 and abs(b14 - 1) <= 1e-5 and abs(float(m.beta) - 2 / 3) <= 1e-14, f"beta(1/4-) {b14:.8f}"

    s.record("analysis", "beta(0)=0, beta(1/4-)->1, beta(3/16)=2/3", beta_limits)

    def transform():
        sp = s.spectrum("0.2", 1)
        pr = ControlProblem.create(sp, 1, [1])
        m = analysis.degenerate_map("0.2")
        res = [analysis.transform_solution(pr, None, m, [0.05, 0.3], n=n).residual for n in (125, 250, 500, 2000)]
        order = min(math.log2(res[0] / res[1]), math.log2(res[1] / res[2]))
        return res[-1] <= 1e-4 and order >= 3.5, f"residual {_fmt(res[-1])} order {order:.2f}"

    s.record("analysis", "degenerate PDE residual and 4th order", transform)


def run_checks(config: VerifyConfig = VerifyConfig()) -> list[Check]:
    suite = _Suite(config)
    for group in (_spectrum_checks, _biortho_checks, _control_checks, _simulate_checks, _analysis_checks):
        group(suite)
    return suite.checks


def format_report(checks: list[Check]) -> str:
    passed = sum(c.passed for c in checks)
    lines = [c.line() for c in checks]
    lines.append(f"{passed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
