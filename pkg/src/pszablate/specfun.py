"""Spherical Bessel/Hankel functions, Legendre polynomials and the
rigid-sphere scattering coefficient.

The ``*_all`` variants return every order ``0..nmax`` at once, with the
order along axis 0, and accept array arguments. They are what the ATF
code uses; the scalar functions are thin wrappers for single values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ConvergenceError",
    "SeriesControl",
    "bessel_j1",
    "spherical_bessel_j",
    "spherical_bessel_y",
    "spherical_hankel1",
    "sph_derivative",
    "legendre_p",
    "rigid_sphere_alpha",
    "sph_jn_all",
    "sph_yn_all",
    "sph_h1_all",
    "sph_derivs",
    "legendre_all",
    "rigid_sphere_alpha_all",
]

_RESCALE = 1e250


class ConvergenceError(RuntimeError):
    """A truncated series hit its order cap before converging."""


@dataclass(frozen=True)
class SeriesControl:
    max_order: int = 80
    term_tol: float = 1e-9

    def __post_init__(self):
        if int(self.max_order) != self.max_order or self.max_order < 0:
            raise ValueError(f"max_order must be a non-negative integer, got {self.max_order!r}")
        if not self.term_tol > 0:
            raise ValueError(f"term_tol must be > 0, got {self.term_tol!r}")


def bessel_j1(x):
    """Cylindrical Bessel function of the first kind, order one."""
    out = special.j1(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _closed_j0(x):
    return np.sin(x) / x


def _closed_j1(x):
    # cancellation in sin/x^2 - cos/x for small x; use the series there
    out = np.empty_like(x)
    small = x < 0.3
    xs = x[small]
    x2 = xs * xs
    # x/3 * sum_k (-x^2/2)^k / (k! * 5*7*...*(2k+3))
    term = np.ones_like(xs)
    acc = np.ones_like(xs)
    for k in range(1, 12):
        term = term * (-x2 / 2.0) / (k * (2 * k + 3))
        acc = acc + term
    out[small] = xs / 3.0 * acc
    xl = x[~small]
    out[~small] = np.sin(xl) / (xl * xl) - np.cos(xl) / xl
    return out


def _as_flat(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1), x.shape


def sph_jn_all(nmax, x):
    """j_n(x) for n = 0..nmax, shape ``(nmax+1,) + x.shape``.

    Orders below the argument are generated by upward recurrence; for
    ``x <= nmax`` a normalized downward (Miller) recurrence is used, with
    periodic rescaling so that tiny arguments cannot overflow.
    """
    nmax = int(nmax)
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    xf, shape = _as_flat(x)
    if np.any(xf < 0) or not np.all(np.isfinite(xf)):
        raise ValueError("spherical Bessel j requires finite x >= 0")
    ntop = max(nmax, 1)
    out = np.zeros((ntop + 1, xf.size))

    zero = xf == 0
    out[0, zero] = 1.0

    up = xf > ntop
    if np.any(up):
        xu = xf[up]
        a, b = _closed_j0(xu), _closed_j1(xu)
        out[0, up], out[1, up] = a, b
        for n in range(1, ntop):
            a, b = b, (2 * n + 1) / xu * b - a
            out[n + 1, up] = b

    low = ~up & ~zero
    if np.any(low):
        xl = xf[low]
        start = ntop + 20 + int(np.sqrt(40.0 * ntop))
        f_next = np.zeros_like(xl)
        f_cur = np.full_like(xl, 1e-30)
        block = np.zeros((ntop + 1, xl.size))
        for n in range(start, 0, -1):
            f_prev = (2 * n + 1) / xl * f_cur - f_next
            f_next, f_cur = f_cur, f_prev
            if n - 1 <= ntop:
                block[n - 1] = f_cur
            big = np.abs(f_cur) > _RESCALE
            if np.any(big):
                f_cur[big] /= _RESCALE
                f_next[big] /= _RESCALE
                lo = max(n - 1, 0)
                if lo <= ntop:
                    block[lo:, big] /= _RESCALE
        j0, j1 = _closed_j0(xl), _closed_j1(xl)
        mag = np.maximum(np.abs(block[0]), np.abs(block[1]))
        f0, f1 = block[0] / mag, block[1] / mag
        scale = (j0 * f0 + j1 * f1) / (f0 * f0 + f1 * f1) / mag
        out[:, low] = block * scale
    return out[: nmax + 1].reshape((nmax + 1,) + shape)


def sph_yn_all(nmax, x):
    """y_n(x) for n = 0..nmax by upward recurrence (stable for y).

    Orders whose magnitude exceeds the float range come back as ``-inf``.
    """
    nmax = int(nmax)
    xf, shape = _as_flat(x)
    if np.any(xf <= 0):
        raise ValueError("spherical Bessel y requires x > 0")
    out = np.empty((max(nmax, 1) + 1, xf.size))
    c, s = np.cos(xf), np.sin(xf)
    out[0] = -c / xf
    out[1] = -c / (xf * xf) - s / xf
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, nmax):
            nxt = (2 * n + 1) / xf * out[n] - out[n - 1]
            out[n + 1] = np.where(np.isnan(nxt), -np.inf, nxt)
    return out[: nmax + 1].reshape((nmax + 1,) + shape)


def sph_h1_all(nmax, x):
    """Spherical Hankel functions of the first kind, orders 0..nmax."""
    j = sph_jn_all(nmax, x)
    out = np.empty(j.shape, dtype=complex)
    out.real = j
    out.imag = sph_yn_all(nmax, x)
    return out


def sph_derivs(values, x):
    """Derivatives of an order stack ``values`` (orders 0..N+1 on axis 0).

    Returns orders 0..N, using f_n' = f_{n-1} - (n+1)/x f_n and
    f_0' = -f_1.
    """
    values = np.asarray(values)
    x = np.asarray(x, dtype=float)
    nmax = values.shape[0] - 2
    if nmax < 0:
        raise ValueError("need at least orders 0 and 1")
    out = np.empty(values[: nmax + 1].shape, dtype=values.dtype)
    out[0] = -values[1]
    n = np.arange(1, nmax + 1).reshape((-1,) + (1,) * x.ndim)
    with np.errstate(over="ignore", invalid="ignore"):
        out[1:] = values[:nmax] - (n + 1) / x * values[1 : nmax + 1]
    return out


def legendre_all(nmax, x):
    """P_n(x) for n = 0..nmax via the Bonnet recurrence."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("Legendre argument must satisfy |x| <= 1")
    out = np.empty((int(nmax) + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, int(nmax)):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def rigid_sphere_alpha_all(nmax, x):
    """alpha_n(x) = j_n'(x) / h_n^(1)'(x), orders 0..nmax.

    This is the coefficient that makes the radial velocity of incident
    plus scattered field vanish on a rigid sphere with ka = x.
    """
    xf = np.asarray(x, dtype=float)
    if np.any(xf <= 0):
        raise ValueError("rigid_sphere_alpha requires x > 0")
    j = sph_jn_all(nmax + 1, xf)
    y = sph_yn_all(nmax + 1, xf)
    jd = sph_derivs(j, xf)
    yd = sph_derivs(y, xf)
    hd = np.empty(jd.shape, dtype=complex)
    hd.real, hd.imag = jd, yd
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        alpha = jd / hd
    # overflowed derivatives mean alpha underflowed to zero
    alpha = np.where(np.isfinite(yd), alpha, 0.0)
    return alpha


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a non-negative integer, got {n!r}")
    return int(n)


def spherical_bessel_j(n, x):
    n = _check_order(n)
    if not np.isfinite(x) or x < 0:
        raise ValueError(f"x must be finite and >= 0, got {x!r}")
    return float(sph_jn_all(n, float(x))[n])


def spherical_bessel_y(n, x):
    n = _check_order(n)
    if not x > 0:
        raise ValueError("y_n is singular at x = 0")
    return float(sph_yn_all(n, float(x))[n])


def spherical_hankel1(n, x):
    n = _check_order(n)
    if not x > 0:
        raise ValueError("h_n^(1) is singular at x = 0")
    return complex(sph_h1_all(n, float(x))[n])


def sph_derivative(kind, n, x):
    """First derivative of j_n (``kind='bessel_j'``) or h_n^(1) (``'hankel1'``)."""
    n = _check_order(n)
    if not x > 0:
        raise ValueError("derivative requires x > 0")
    if kind == "bessel_j":
        vals = sph_jn_all(n + 1, float(x))
    elif kind == "hankel1":
        vals = sph_h1_all(n + 1, float(x))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return complex(sph_derivs(vals, float(x))[n])


def legendre_p(n, x):
    n = _check_order(n)
    return float(legendre_all(n, float(x))[n])


def rigid_sphere_alpha(n, x):
    n = _check_order(n)
    return complex(rigid_sphere_alpha_all(n, float(x))[n])
