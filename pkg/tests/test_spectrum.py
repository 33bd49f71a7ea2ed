import json
import math

import mpmath as mp
import numpy as np
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

from conftest import spectrum_for
from hardyheat.errors import CriticalParameterError, DomainError
from hardyheat.spectrum import (
    QuadratureWarning,
    build_spectrum,
    derive_params,
    eigenfunction,
    eigenfunction_derivatives,
    eigenfunction_values,
    gram_defect,
    hardy_check,
    trace_limit,
)


@pytest.mark.parametrize(
    "mu, nu, alpha",
    [("0", 0.5, 0.0), ("0.1875", 0.25, 0.25), ("-2", 1.5, -1.0)],
)
def test_derive_params_examples(mu, nu, alpha):
    p = derive_params(mu)
    assert float(p.nu) == nu
    assert float(p.alpha) == alpha
    assert p.nu + p.alpha == mpfr("0.5")


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-150, max_value=0.2499))
def test_nu_plus_alpha_is_half(mu):
    p = derive_params(mu)
    assert p.nu + p.alpha == mpfr("0.5")
    assert p.critical_gap == pytest.approx(math.sqrt(1 - 4 * mu), rel=1e-12)


def test_critical_and_large_nu_rejected():
    for mu in ("0.25", 0.3, 1):
        with pytest.raises(CriticalParameterError, match="mu < 1/4"):
            derive_params(mu)
    with pytest.raises(DomainError):
        derive_params(-3000)


def test_sine_system_at_mu_zero():
    s = spectrum_for("0", 20)
    for m in s.modes:
        assert abs(float(m.lam) - (m.k * math.pi) ** 2) <= 1e-10 * m.k**2
    assert float(s.mode(1).c_norm) == pytest.approx(math.pi, rel=1e-14)
    xs = np.linspace(0.01, 0.99, 41)
    for k in (1, 2, 7, 20):
        np.testing.assert_allclose(
            eigenfunction_values(s, k, xs), math.sqrt(2) * np.sin(k * math.pi * xs), atol=1e-10
        )
    assert float(eigenfunction(s, 1, "0.5")) == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("mu", ["-1", "0", "0.2", "0.24"])
def test_boundary_value_vanishes(mu):
    s = spectrum_for(mu, 8)
    for k in range(1, 9):
        assert abs(eigenfunction(s, k, 1)) <= 10 * s.precision.series_tol * (1 + float(s.mode(k).c_norm))


def test_gap_on_square_roots_at_mu_02():
    js = [float(j) for j in spectrum_for("0.2", 20).js]
    assert all(b - a >= 0.75 * math.pi for a, b in zip(js, js[1:]))


@pytest.mark.parametrize("mu", ["-1", "0", "0.2", "0.24"])
def test_orthonormality_k20(mu):
    assert gram_defect(spectrum_for(mu, 20)) <= 1e-8


@pytest.mark.parametrize("mu", ["-1", "0.2"])
def test_orthonormality_against_mpmath(mu):
    s = spectrum_for(mu, 3)
    with mp.workdps(30):
        nu = mp.mpf(str(s.params.nu))
        for k in (1, 3):
            m = s.mode(k)
            j, c = mp.mpf(str(m.j)), mp.mpf(str(m.c_norm))
            norm = mp.quad(lambda x: (c * mp.sqrt(x) * mp.besselj(nu, j * x)) ** 2, [0, 0.5, 1])
            assert abs(norm - 1) <= 1e-20


@pytest.mark.parametrize("mu", ["-1", "0", "0.2", "0.24"])
def test_eigen_equation_residual(mu):
    s = spectrum_for(mu, 8)
    m_ = s.params.mu
    for k in range(1, 9):
        lam = s.mode(k).lam
        for x in ("0.2", "0.5", "0.8"):
            phi, _, d2 = eigenfunction_derivatives(s, k, x)
            x = mpfr(x, 256)
            resid = -d2 - m_ / (x * x) * phi - lam * phi
            # relative to the envelope lambda_k sup|Phi_k|; Phi_k itself can vanish at a probe
            scale = (lam + abs(m_) / (x * x)) * mpfr(2) ** 0.5
            assert abs(float(resid / scale)) <= 1e-7


@pytest.mark.parametrize("mu", ["-1", "0", "0.2"])
def test_normalisation_asymptotics_at_k50(mu):
    s = spectrum_for(mu, 50)
    m = s.mode(50)
    assert float(m.c_norm / (math.pi * m.j) ** 0.5) == pytest.approx(1, rel=0.02)


@pytest.mark.parametrize("mu", ["-1", "0", "0.2", "0.24"])
def test_trace_coefficient_growth_exponent(mu):
    s = spectrum_for(mu, 50)
    ks = range(10, 51)
    lj = [math.log(float(s.mode(k).j)) for k in ks]
    lr = [math.log(float(s.mode(k).r)) for k in ks]
    slope = np.polyfit(lj, lr, 1)[0]
    assert slope == pytest.approx(float(s.params.nu) + 0.5, abs=0.05)


@pytest.mark.parametrize("mu", ["-1", "0", "0.2", "0.24"])
def test_trace_coefficients_positive(mu):
    assert all(m.r > 0 for m in spectrum_for(mu, 20).modes)


def test_trace_coefficient_sine_values():
    s = spectrum_for("0", 10)
    assert float(s.mode(1).r) == pytest.approx(4.442882938158366, rel=1e-15)
    for m in s.modes:
        assert abs(float(m.r) - math.sqrt(2) * m.k * math.pi) <= 1e-8


@pytest.mark.parametrize("mu", ["-1", "0.2"])
def test_trace_limit_matches_closed_form(mu):
    s = spectrum_for(mu, 10)
    for m in s.modes:
        lim = trace_limit(s.params, m, s.precision)
        assert abs(float((lim - m.r) / m.r)) <= 1e-6


def test_trace_limit_matches_finite_difference_oracle():
    # independent route: mpmath derivative of the eigenfunction, x^alpha Phi'(x) at tiny x
    s = spectrum_for("0.2", 2)
    m = s.mode(2)
    with mp.workdps(50):
        nu, alpha = (mp.mpf(str(v)) for v in (s.params.nu, s.params.alpha))
        j, c = mp.mpf(str(m.j)), mp.mpf(str(m.c_norm))
        x = mp.mpf("1e-12")
        val = x**alpha * mp.diff(lambda y: c * mp.sqrt(y) * mp.besselj(nu, j * y), x)
    assert abs(float(val / mp.mpf(str(m.r))) - 1) <= 1e-8


def test_spectrum_export_is_decimal_text():
    d = spectrum_for("0.2", 3).to_dict()
    json.dumps(d)
    assert d["modes"][0]["k"] == 1
    assert all(isinstance(d["modes"][0][key], str) for key in ("j", "lambda", "C", "r"))
    assert mpfr(d["modes"][2]["lambda"], 256) == spectrum_for("0.2", 3).mode(3).lam


def test_build_spectrum_rejects_bad_k():
    p = derive_params(0)
    for K in (0, 201):
        with pytest.raises(DomainError):
            build_spectrum(p, K)
    with pytest.raises(IndexError):
        spectrum_for("0", 3).mode(4)
    with pytest.raises(DomainError):
        eigenfunction(spectrum_for("0", 3), 1, 0)


def test_hardy_examples():
    z = Polynomial([0, 1, -1])
    lhs, rhs, holds = hardy_check(z)
    assert lhs == pytest.approx(1 / 12, rel=1e-12)
    assert rhs == pytest.approx(1 / 3, rel=1e-12)
    assert holds
    res = hardy_check(lambda x: np.sin(np.pi * x), lambda x: np.pi * np.cos(np.pi * x))
    assert res.holds


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=6))
def test_hardy_random_polynomials(coeffs):
    z = Polynomial([0, 1, -1]) * Polynomial(coeffs)
    assert hardy_check(z, tol=1e-9).holds


def test_hardy_warns_on_unresolved_singularity():
    # x^0.55 barely vanishes faster than sqrt(x); the singular integrand does not settle
    with pytest.warns(QuadratureWarning):
        hardy_check(lambda x: x**0.55 * (1 - x), lambda x: 0.55 * x**-0.45 - 1.55 * x**0.55, nodes=20)
