import json
import math
import threading

import mpmath as mp
import numpy as np
import pytest
import scipy.special as sc
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from hardyheat.errors import DomainError, PrecisionError
from hardyheat.quad import gauss_legendre
from hardyheat.specfun import (
    DEFAULT_PRECISION,
    DOUBLE,
    Precision,
    ZeroCache,
    bessel_j,
    bessel_j_prime,
    bessel_j_second,
    bessel_zeros,
    gamma,
    mcmahon,
    zero_bounds,
)


def test_precision_defaults_and_validation():
    p = Precision(128)
    assert p.series_tol == 2.0**-64
    with pytest.raises(DomainError):
        Precision(52)
    with pytest.raises(DomainError):
        Precision(128, series_tol=1e-3)


@pytest.mark.parametrize("x, expected", [(1, 1.0), (5, 24.0), (1.5, 0.886226925452758)])
def test_gamma_examples(x, expected):
    assert float(gamma(x)) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-3, max_value=200))
def test_gamma_double_matches_mpmath(x):
    ref = mp.gamma(mp.mpf(x))
    # Gamma(172..200) overflows doubles, so compare the mpfr result in mpmath
    assert abs(mp.mpf(str(gamma(x))) / ref - 1) <= 1e-13


def test_gamma_extended_precision_scales():
    with mp.workdps(80):
        ref = mp.gamma(mp.mpf(7) / 3)
        with DEFAULT_PRECISION.context():
            x = mpfr(7) / 3
        got = gamma(x, DEFAULT_PRECISION)
        assert abs(mp.mpf(str(got)) / ref - 1) < mp.mpf(10) ** -70


def test_gamma_domain():
    for bad in (0, -1.5, 201):
        with pytest.raises(DomainError):
            gamma(bad)


def test_bessel_examples():
    assert float(bessel_j(0.5, math.pi / 2)) == pytest.approx(2 / math.pi, rel=1e-15)
    assert bessel_j(0.3, 0) == 0
    assert bessel_j(0, 0) == 1
    assert abs(float(bessel_j(0, mpfr("2.404825557695772768621631879326454643124", 256)))) < 1e-10


@settings(max_examples=150, deadline=None)
# scipy flushes J_nu(x) to 0 for subnormal x, so the oracle is used from 1e-100 up
@given(st.floats(min_value=0, max_value=25), st.one_of(st.just(0.0), st.floats(min_value=1e-100, max_value=120)))
def test_bessel_matches_scipy(nu, x):
    got = float(bessel_j(nu, x, Precision(64, series_tol=2.0**-60)))
    ref = sc.jv(nu, x)
    scale = max(abs(ref), 1e-300, min(1.0, math.sqrt(2 / (math.pi * max(x, 1e-300)))) * 1e-3)
    assert abs(got - ref) <= 1e-11 * scale + 1e-300


@pytest.mark.parametrize("nu, x", [(0.3, 17.25), (2.0, 99.5), (0.0, 300.0), (11.7, 450.0)])
def test_bessel_extended_matches_mpmath(nu, x):
    with mp.workdps(90):
        ref = mp.besselj(mp.mpf(nu), mp.mpf(x))
        got = mp.mpf(str(bessel_j(nu, x, DEFAULT_PRECISION)))
        # the series stops at series_tol = 2^-128 relative to the envelope of J
        envelope = max(abs(ref), mp.sqrt(2 / (mp.pi * x)) * mp.mpf(10) ** -3)
        assert abs(got - ref) <= 10 * DEFAULT_PRECISION.series_tol * envelope


def test_bessel_subnormal_argument():
    x = 2.225073858507e-311
    expect = math.exp(0.03125 * (math.log(x) - math.log(2)) - math.lgamma(1.03125))
    assert float(bessel_j(0.03125, x)) == pytest.approx(expect, rel=1e-14)


def test_bessel_domain_and_precision_guard():
    with pytest.raises(DomainError):
        bessel_j(0.5, 501)
    with pytest.raises(DomainError):
        bessel_j(-1, 1)
    # 53 bits cannot absorb the cancellation of the series at x = 200
    with pytest.raises(PrecisionError):
        bessel_j(0.5, 200, DOUBLE, guard=False)


def test_bessel_prime_examples():
    assert abs(float(bessel_j_prime(0.5, math.pi))) == pytest.approx(math.sqrt(2) / math.pi, rel=1e-14)
    j01 = bessel_zeros(0, 1).zeros[0]
    assert float(bessel_j_prime(0, j01)) == pytest.approx(-0.5191474972894669, rel=1e-13)
    h = 1e-4
    fd = (float(bessel_j(0.3, 1.7 + h)) - float(bessel_j(0.3, 1.7 - h))) / (2 * h)
    assert float(bessel_j_prime(0.3, 1.7)) == pytest.approx(fd, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0, max_value=10), st.floats(min_value=0.1, max_value=60))
def test_bessel_second_derivative_solves_bessel_equation(nu, x):
    p = Precision(128)
    J, d1, d2 = (float(f(nu, x, p)) for f in (bessel_j, bessel_j_prime, bessel_j_second))
    resid = x * x * d2 + x * d1 + (x * x - nu * nu) * J
    assert abs(resid) <= 1e-12 * (x * x + nu * nu + 1)


def test_zero_examples():
    half = bessel_zeros(0.5, 3).zeros
    for k, z in enumerate(half, 1):
        assert abs(float(z) - k * math.pi) <= 1e-10
    assert abs(float(bessel_zeros(0, 1).zeros[0]) - 2.4048255577) <= 1e-9
    z = float(bessel_zeros(0.3, 1).zeros[0])
    assert math.pi * (1 + 0.15 - 0.25) <= z <= math.pi * (1 + 0.075 - 0.125)


@pytest.mark.parametrize("nu", [0, 1, 2, 5])
def test_integer_order_zeros_match_scipy(nu):
    got = np.array([float(z) for z in bessel_zeros(nu, 40).zeros])
    np.testing.assert_allclose(got, sc.jn_zeros(nu, 40), rtol=1e-14)


@pytest.mark.parametrize("nu", [0.1, 0.3, 1.7, 7.25])
def test_fractional_order_zeros_match_mpmath(nu):
    got = bessel_zeros(nu, 6).zeros
    with mp.workdps(60):
        for k, z in enumerate(got, 1):
            ref = mp.besseljzero(mp.mpf(nu), k)
            assert abs(mp.mpf(str(z)) - ref) <= mp.mpf(10) ** -50 * ref


@pytest.mark.parametrize("nu", [0, 0.1, 0.25, 0.5, 1, 2])
def test_zero_bounds_gaps_and_monotonicity(nu):
    zs = np.array([float(z) for z in bessel_zeros(nu, 30).zeros])
    for k, z in enumerate(zs, 1):
        lo, hi = zero_bounds(nu, k)
        assert lo * (1 - 1e-14) <= z <= hi * (1 + 1e-14)
    gaps = np.diff(zs)
    assert gaps.min() >= (0.75 * math.pi if nu <= 0.5 else math.pi) * (1 - 1e-14)
    steps = np.diff(gaps)
    if nu < 0.5:
        assert np.all(steps > 0)
    elif nu > 0.5:
        assert np.all(steps < 0)
    else:
        assert np.all(np.abs(steps) < 1e-12)


@pytest.mark.parametrize("nu", [0.1, 0.5, 1, 3])
def test_landau_bound(nu):
    xs = np.linspace(0.01, 60, 400)
    vals = [abs(float(bessel_j(nu, x, Precision(64, series_tol=2.0**-60)))) for x in xs]
    assert max(vals) <= nu ** (-1 / 3)


@pytest.mark.parametrize("nu", [0, 0.3, 2.5])
def test_small_argument_law(nu):
    for x in (1e-3, 1e-5):
        ratio = float(bessel_j(nu, x)) * math.gamma(nu + 1) * (2 / x) ** nu
        assert abs(ratio - 1) <= x * x


@pytest.mark.parametrize("nu", [0.2, 1.5])
def test_orthogonality_integral(nu):
    zs = bessel_zeros(nu, 5).zeros
    x, w = gauss_legendre(400)
    p = Precision(64, series_tol=2.0**-60)
    J = np.array([[float(bessel_j(nu, z * xi, p)) for xi in x] for z in zs])
    gram = (J * (w * x)) @ J.T
    expect = np.diag([float(bessel_j(nu + 1, z)) ** 2 / 2 for z in zs])
    assert np.max(np.abs(gram - expect)) <= 1e-9


@pytest.mark.parametrize("nu", [0.1, 1.0, 2.0])
def test_mcmahon_residual_decays_cubically(nu):
    zs = [float(z) for z in bessel_zeros(nu, 30).zeros]
    err = [abs(z - mcmahon(nu, k)) for k, z in enumerate(zs, 1)]
    for k in range(10, 29):
        ratio = err[k] / err[k - 1]  # err_{k+1} / err_k
        cube = (k / (k + 1)) ** 3
        assert cube / 4 <= ratio <= cube * 4


def test_zero_cache_roundtrip_and_full_precision_key(tmp_path):
    cache = ZeroCache(tmp_path / "zeros.json")
    first = bessel_zeros("0.3", 5, cache=cache)
    data = json.loads((tmp_path / "zeros.json").read_text())
    assert list(data) == [ZeroCache.key(first.nu, 5, 256)]
    again = bessel_zeros("0.3", 5, cache=cache)
    assert again.zeros == first.zeros
    # a nu that rounds to the same 12-decimal key but differs beyond it is a miss
    near = mpfr("0.3", 256) + mpfr("1e-20", 256)
    assert cache.get(near, 5, DEFAULT_PRECISION) is None


def test_zero_cache_concurrent_writers(tmp_path):
    cache = ZeroCache(tmp_path / "zeros.json")
    errors = []

    def work(nu):
        try:
            bessel_zeros(nu, 4, cache=cache)
        except Exception as exc:  # pragma: no cover - reported below
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(nu,)) for nu in ("0.1", "0.2", "0.3", "0.4", "1.5", "2.5")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(json.loads((tmp_path / "zeros.json").read_text())) == 6


def test_zero_cache_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(ZeroCache.ENV, str(tmp_path))
    cache = ZeroCache.from_env()
    assert cache.path == tmp_path / "zeros.json"


def test_zeros_reject_bad_arguments():
    with pytest.raises(DomainError):
        bessel_zeros(-0.1, 3)
    with pytest.raises(DomainError):
        bessel_zeros(0.5, 201)
