"""Deterministic evaluation of mu(c), the moments of m_c(inf), K_nu and c_t(b).

mu(c) has three independent routes that are kept separate on purpose:

* :func:`mu_direct`   -- integral of x^-1 exp(-(c(x-1))^2 / 2x) over (0, inf)
* :func:`mu_gaussian` -- Gaussian integral of 1 / sqrt(1 + y^2 / 4c^2)
* :func:`mu_bessel`   -- sqrt(2/pi) c e^{c^2} K_0(c^2), the 1/2-moment of m_c(inf)

All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np

from .quadrature import Quadrature

__all__ = [
    "MuValue",
    "MomentValue",
    "DEFAULT_QUADRATURE",
    "m_infinity_density",
    "mu_direct",
    "mu_gaussian",
    "mu_bessel",
    "mu",
    "bessel_k",
    "bessel_k_scaled",
    "moment_m_infinity",
    "moment_by_density",
    "minimize_moment",
    "critical_c",
    "extinction_probability",
]

DEFAULT_QUADRATURE = Quadrature()

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
# e^{-69.08} ~ 1e-30: Bessel integrand truncation level
_TAIL_EXPONENT = 69.08

Method = Literal["direct", "gaussian", "bessel"]


@dataclass(frozen=True)
class MuValue:
    c: float
    mu: float
    method: str
    err_bound: float


@dataclass(frozen=True)
class MomentValue:
    c: float
    theta: float
    value: float
    err_bound: float = 0.0


def _check_c(c: float) -> float:
    c = float(c)
    if not (c > 0 and math.isfinite(c)):
        raise ValueError(f"c must be finite and positive, got {c}")
    return c


def m_infinity_density(c: float, x):
    """Density of m_c(inf): c exp(-(c(x-1))^2 / 2x) / sqrt(2 pi x^3), zero for x <= 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = c * np.exp(-((c * (xp - 1.0)) ** 2) / (2.0 * xp)) / np.sqrt(2.0 * math.pi * xp**3)
    return out


def _scale_points(center: float, width: float, lower: float = -math.inf) -> list[float]:
    pts = [center]
    for k in (1.0, 4.0, 16.0, 64.0):
        pts.append(center + k * width)
        if center - k * width > lower:
            pts.append(center - k * width)
    return pts


def mu_direct(c: float, q: Quadrature = DEFAULT_QUADRATURE) -> MuValue:
    c = _check_c(c)

    def integrand(x):
        return np.exp(-((c * (x - 1.0)) ** 2) / (2.0 * x)) / x

    # the peak at x = 1 has width ~1/c; for small c the mass sits at x ~ c^2 and x ~ 1/c^2
    pts = _scale_points(1.0, min(0.2, 1.0 / c), lower=0.0)
    if c < 1:
        pts += [c * c, 1.0 / (c * c)]
    r = q.integrate(integrand, 0.0, math.inf, pts)
    k = c / _SQRT_2PI
    return MuValue(c, k * r.value, "direct", k * r.error)


def mu_gaussian(c: float, q: Quadrature = DEFAULT_QUADRATURE) -> MuValue:
    c = _check_c(c)
    inv = 1.0 / (4.0 * c * c)

    def integrand(y):
        return np.exp(-0.5 * y * y) / np.sqrt(1.0 + y * y * inv)

    pts = [1.0, 4.0, 10.0, 2.0 * c] if 2.0 * c < 10.0 else [1.0, 4.0, 10.0]
    r = q.integrate(integrand, 0.0, math.inf, pts)
    # symmetric integrand: twice the half line
    return MuValue(c, 2.0 * r.value / _SQRT_2PI, "gaussian", 2.0 * r.error / _SQRT_2PI)


def bessel_k_scaled(order: float, z: float, q: Quadrature = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """Return ``(e^z K_order(z), error)`` from the cosh integral representation.

    Works with exp(-z (cosh t - 1)) so neither factor under/overflows for the
    moderate z used here.
    """
    z = float(z)
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    nu = abs(float(order))

    # t_max: z (cosh t - 1) - nu t >= 69, solved by fixed-point on cosh
    t_max = math.acosh(1.0 + _TAIL_EXPONENT / z)
    for _ in range(50):
        nxt = math.acosh(1.0 + (_TAIL_EXPONENT + nu * t_max) / z)
        if abs(nxt - t_max) < 1e-12:
            break
        t_max = nxt
    if nu * t_max > 700.0:
        raise OverflowError(f"K_{order}({z}) out of double range")

    def integrand(t):
        return np.exp(-z * (np.cosh(t) - 1.0)) * np.cosh(nu * t)

    pts = []
    for level in (0.5, 2.0, 8.0, 30.0):
        arg = 1.0 + level / z
        t = math.acosh(arg)
        if 0 < t < t_max:
            pts.append(t)
    r = q.integrate(integrand, 0.0, t_max, pts)
    if not math.isfinite(r.value):
        raise OverflowError(f"K_{order}({z}) out of double range")
    return r.value, r.error


def bessel_k(order: float, z: float, q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Modified Bessel function of the second kind, K_order(z), for z > 0.

    Symmetric in ``order`` by construction (only ``|order|`` is used).
    """
    scaled, _ = bessel_k_scaled(order, z, q)
    value = scaled * math.exp(-z)
    if not math.isfinite(value):
        raise OverflowError(f"K_{order}({z}) out of double range")
    return value


def moment_m_infinity(c: float, theta: float, q: Quadrature = DEFAULT_QUADRATURE) -> MomentValue:
    """E[m_c(inf)^theta] = sqrt(2/pi) c e^{c^2} K_{theta-1/2}(c^2)."""
    c = _check_c(c)
    scaled, err = bessel_k_scaled(theta - 0.5, c * c, q)
    k = _SQRT_2_OVER_PI * c
    return MomentValue(c, float(theta), k * scaled, k * err)


def moment_by_density(c: float, theta: float, q: Quadrature = DEFAULT_QUADRATURE) -> MomentValue:
    """E[m_c(inf)^theta] by direct quadrature of x^theta against the density."""
    c = _check_c(c)

    def integrand(x):
        return x**theta * m_infinity_density(c, x)

    pts = _scale_points(1.0, min(0.2, 1.0 / c), lower=0.0)
    if c < 1:
        pts += [c * c, 1.0 / (c * c)]
    r = q.integrate(integrand, 0.0, math.inf, pts)
    return MomentValue(c, float(theta), r.value, r.error)


def mu_bessel(c: float, q: Quadrature = DEFAULT_QUADRATURE) -> MuValue:
    m = moment_m_infinity(c, 0.5, q)
    return MuValue(m.c, m.value, "bessel", m.err_bound)


_MU_METHODS = {"direct": mu_direct, "gaussian": mu_gaussian, "bessel": mu_bessel}


def mu(c: float, method: Method = "gaussian", q: Quadrature = DEFAULT_QUADRATURE) -> MuValue:
    try:
        fn = _MU_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    return fn(c, q)


def minimize_moment(c: float, lo: float = -2.0, hi: float = 3.0, tol: float = 1e-7,
                    q: Quadrature = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """Golden-section search for argmin_theta E[m_c(inf)^theta] on [lo, hi].

    Returns ``(theta_star, minimum)``.
    """
    c = _check_c(c)
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0

    def f(theta):
        return moment_m_infinity(c, theta, q).value

    a, b = lo, hi
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
    theta = 0.5 * (a + b)
    return theta, f(theta)


def critical_c(b: float, tol: float = 1e-10, method: Method = "gaussian",
               q: Quadrature = DEFAULT_QUADRATURE) -> float:
    """Solve mu(c) = 1/b by bisection; the phase boundary c_t(b) = c_r(b)."""
    b = float(b)
    if not b > 1:
        raise ValueError(f"b must exceed 1, got {b}")
    target = 1.0 / b

    def g(c):
        return mu(c, method, q).mu - target

    lo, hi = 1e-6, 64.0
    while g(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            raise ArithmeticError("could not bracket the root from below")
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("could not bracket the root from above")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def extinction_probability(nu, tol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Smallest fixed point of the offspring generating function.

    ``nu`` is an :class:`~vrjpgw.trees.OffspringDistribution` or a ``{k: p}`` mapping.
    Critical laws converge slowly (error ~ 1/n), hence the large ``max_iter``.
    """
    items = nu.items() if isinstance(nu, Mapping) else nu.support
    ks = np.array([k for k, _ in items], dtype=float)
    ps = np.array([p for _, p in items], dtype=float)
    mean = float(ks @ ps)
    if ps[ks == 0].sum() == 0:
        return 0.0
    if mean <= 1.0:
        return 1.0
    q = 0.0
    for _ in range(max_iter):
        nxt = float(ps @ q**ks)
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    raise ArithmeticError("generating-function iteration did not converge")
