"""Special functions against closed forms, mpmath and scipy references."""
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from oracles import j1_first_root, j1_series
from pszablate import specfun
from pszablate.specfun import (
    SeriesControl,
    bessel_j1,
    legendre_all,
    legendre_p,
    rigid_sphere_alpha,
    rigid_sphere_alpha_all,
    sph_derivative,
    sph_derivs,
    sph_h1_all,
    sph_jn_all,
    sph_yn_all,
    spherical_bessel_j,
    spherical_bessel_y,
    spherical_hankel1,
)


# ---- J1


def test_j1_zero():
    assert bessel_j1(0.0) == 0.0


def test_j1_at_one_matches_series():
    assert abs(bessel_j1(1.0) - j1_series(1.0)) < 1e-12
    assert abs(bessel_j1(1.0) - 0.4400505857) < 1e-9


def test_j1_first_root():
    root = j1_first_root()
    assert abs(root - 3.8317059702) < 1e-9
    assert abs(bessel_j1(3.8317059702)) < 1e-8
    assert abs(bessel_j1(root)) < 1e-12


@given(st.floats(-50, 50))
def test_j1_odd(x):
    assert bessel_j1(-x) == -bessel_j1(x)


# ---- spherical Bessel / Hankel


@given(st.floats(1e-3, 100))
def test_j0_closed_form(x):
    assert spherical_bessel_j(0, x) == pytest.approx(math.sin(x) / x, rel=1e-10, abs=1e-300)


def test_j_at_zero():
    assert spherical_bessel_j(0, 0.0) == 1.0
    for n in (1, 5, 40):
        assert spherical_bessel_j(n, 0.0) == 0.0


def test_j1_value():
    x = 1.0
    assert abs(spherical_bessel_j(1, x) - 0.3011686789) < 1e-9
    assert spherical_bessel_j(1, x) == pytest.approx(math.sin(x) / x**2 - math.cos(x) / x, rel=1e-14)


def test_closed_forms_n01_relative():
    x = np.geomspace(1e-3, 100, 400)
    j = sph_jn_all(1, x)
    h = sph_h1_all(1, x)
    with mpmath.workdps(40):
        j1_ref = np.array([float(mpmath.sin(v) / mpmath.mpf(v) ** 2 - mpmath.cos(v) / v) for v in x])
    assert np.max(np.abs(j[0] / (np.sin(x) / x) - 1)) < 1e-10
    assert np.max(np.abs(j[1] / j1_ref - 1)) < 1e-10
    h0 = -1j * np.exp(1j * x) / x
    h1 = -np.exp(1j * x) * (x + 1j) / x**2
    assert np.max(np.abs(h[0] / h0 - 1)) < 1e-10
    assert np.max(np.abs(h[1] / h1 - 1)) < 1e-10


def test_h0_closed_form_and_magnitude():
    for x in (0.3, 2.0, 17.5):
        assert spherical_hankel1(0, x) == pytest.approx(-1j * np.exp(1j * x) / x, rel=1e-12)
    assert abs(abs(spherical_hankel1(0, 2.0)) - 0.5) < 1e-12


def test_hankel_rejects_zero():
    with pytest.raises(ValueError):
        spherical_hankel1(0, 0.0)
    with pytest.raises(ValueError):
        spherical_bessel_y(2, 0.0)


def test_j_against_mpmath_high_order_small_x():
    # the regime where upward recurrence would blow up
    for n, x in [(10, 0.01), (40, 0.5), (80, 1e-3), (60, 20.0), (5, 300.0)]:
        ref = float(mpmath.sqrt(mpmath.pi / (2 * x)) * mpmath.besselj(n + 0.5, x))
        got = spherical_bessel_j(n, x)
        assert np.isfinite(got)
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_j_y_against_scipy_sweep():
    x = np.geomspace(1e-2, 500, 300)
    N = 100
    j = sph_jn_all(N, x)
    y = sph_yn_all(N, x)
    n = np.arange(N + 1)[:, None]
    jr = special.spherical_jn(n, x)
    yr = special.spherical_yn(n, x)
    ok = np.abs(jr) > 1e-290
    assert np.max(np.abs(j[ok] - jr[ok]) / np.abs(jr[ok])) < 1e-9
    fin = np.isfinite(yr)
    assert np.max(np.abs(y[fin] - yr[fin]) / np.abs(yr[fin])) < 1e-9


def test_no_overflow_at_tiny_arguments():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        j = sph_jn_all(80, np.array([1e-6, 1e-3, 0.05]))
    assert np.all(np.isfinite(j))


def test_wronskian():
    x = np.linspace(0.5, 50, 200)
    N = 60
    j = sph_jn_all(N + 1, x)
    y = sph_yn_all(N + 1, x)
    jd, yd = sph_derivs(j, x), sph_derivs(y, x)
    W = j[: N + 1] * yd - jd * y[: N + 1]
    fin = np.isfinite(W)
    # where y_n overflows the identity is not representable in doubles
    resid = np.abs(W[fin] * x[None, :].repeat(N + 1, 0)[fin] ** 2 - 1)
    assert np.max(resid) < 1e-8
    assert fin.mean() > 0.9


# ---- derivatives


def test_derivative_base_cases():
    x = 1.7
    assert sph_derivative("bessel_j", 0, x) == pytest.approx(-spherical_bessel_j(1, x), rel=1e-14)
    assert sph_derivative("hankel1", 0, 2.0) == pytest.approx(-spherical_hankel1(1, 2.0), rel=1e-14)


def test_derivative_finite_difference():
    h = 1e-5
    for n, x in [(1, 1.0), (3, 2.5), (7, 9.0)]:
        fd = (spherical_bessel_j(n, x + h) - spherical_bessel_j(n, x - h)) / (2 * h)
        assert abs(sph_derivative("bessel_j", n, x).real - fd) < 1e-6
        fdh = (spherical_hankel1(n, x + h) - spherical_hankel1(n, x - h)) / (2 * h)
        assert abs(sph_derivative("hankel1", n, x) - fdh) < 1e-6 * max(1, abs(fdh))


def test_derivative_rejects():
    with pytest.raises(ValueError):
        sph_derivative("bessel_j", 1, 0.0)
    with pytest.raises(ValueError):
        sph_derivative("bessel_y", 1, 1.0)


# ---- Legendre


def test_legendre_examples():
    assert legendre_p(0, 0.3) == 1.0
    assert legendre_p(1, -0.4) == -0.4
    assert abs(legendre_p(2, 0.5) - (3 * 0.25 - 1) / 2) < 1e-12
    assert legendre_p(2, 0.5) == pytest.approx(-0.125, abs=1e-12)


def test_legendre_rejects_outside():
    with pytest.raises(ValueError):
        legendre_p(3, 1.0001)


def test_legendre_against_scipy():
    x = np.linspace(-1, 1, 101)
    P = legendre_all(60, x)
    for n in (0, 1, 5, 17, 60):
        assert np.max(np.abs(P[n] - special.eval_legendre(n, x))) < 1e-12


@given(st.floats(-1, 1), st.integers(1, 80))
def test_legendre_bonnet_and_bound(x, n):
    P = legendre_all(n + 1, x)
    resid = (n + 1) * P[n + 1] - (2 * n + 1) * x * P[n] + n * P[n - 1]
    assert abs(resid) < 1e-12
    assert np.all(np.abs(P) <= 1 + 1e-12)


@given(st.integers(0, 100))
def test_legendre_at_one(n):
    assert legendre_p(n, 1.0) == pytest.approx(1.0, abs=1e-12)


# ---- rigid-sphere coefficient


def test_alpha_base_case():
    x = 1.3
    assert rigid_sphere_alpha(0, x) == pytest.approx(spherical_bessel_j(1, x) / spherical_hankel1(1, x), rel=1e-13)


def test_alpha_passive_and_defining_identity():
    x = np.linspace(0.1, 50, 120)
    a = rigid_sphere_alpha_all(40, x)
    assert np.all(np.abs(a) <= 1 + 1e-12)
    j = sph_jn_all(41, x)
    h = sph_h1_all(41, x)
    jd, hd = sph_derivs(j, x), sph_derivs(h, x)
    fin = np.isfinite(hd)
    resid = np.abs(jd - a * hd)[fin] / np.maximum(np.abs(jd[fin]), 1e-300)
    assert np.max(np.where(np.abs(jd[fin]) > 1e-300, resid, 0)) < 1e-10


def test_alpha_rejects_zero():
    with pytest.raises(ValueError):
        rigid_sphere_alpha(1, 0.0)


# ---- addition theorem


def test_addition_theorem_magnitude_grows_to_one():
    k, r1, r2, cg = 50.0, 0.09, 1.0, 0.3
    d = math.sqrt(r1 * r1 + r2 * r2 - 2 * r1 * r2 * cg)
    N = 60
    j = sph_jn_all(N, k * r1)
    h = sph_h1_all(N, k * r2)
    P = legendre_all(N, cg)
    terms = (2 * np.arange(N + 1) + 1) * j * h * P
    partial = np.cumsum(terms)
    mag = np.abs(1j * k * d * np.exp(-1j * k * d) * partial)
    assert abs(mag[5] - 1) > 1e-3
    assert abs(mag[-1] - 1) < 1e-12
    # the full sum equals the outgoing Green's function exp(ikd)/(ikd)
    assert partial[-1] == pytest.approx(np.exp(1j * k * d) / (1j * k * d), rel=1e-12)


def test_series_control_validation():
    SeriesControl(max_order=0, term_tol=1e-3)
    with pytest.raises(ValueError):
        SeriesControl(max_order=-1)
    with pytest.raises(ValueError):
        SeriesControl(term_tol=0)


@settings(max_examples=50)
@given(st.integers(0, 60), st.floats(0.5, 50))
def test_scalar_wrappers_match_stack(n, x):
    assert spherical_bessel_j(n, x) == specfun.sph_jn_all(n, x)[n]
