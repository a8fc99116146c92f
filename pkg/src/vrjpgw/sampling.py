"""Exact samplers for A_c(t) and m_c(inf).

A_c(t) is the local time at site 1 (counting the initial c) of VRJP(c) on
the two-vertex graph {0, 1}, started at 0 and stopped when the local time at
0 reaches t. Two exact routes are provided:

``event``
    Direct event-driven simulation of the two-site walk. Cost grows like
    t^2 jumps per draw.

``mixture``
    O(1) per draw. Measured in the squared local-time clocks (s^2, u^2), the
    two-site walk is a mixture of Markov jump processes with rates m/2
    (0 -> 1) and 1/(2m) (1 -> 0), where m ~ m_c(inf). Given m, the number of
    0 -> 1 jumps before the clock at 0 reaches t^2 - c^2 is Poisson, and the
    total clock at 1 is a Gamma sum, hence

        A_c(t) = sqrt(c^2 + 2 m G),  G ~ Gamma(N, 1),  N ~ Poisson(m (t^2 - c^2) / 2).

    Both routes are cross-checked in the tests.

m_c(inf) is inverse Gaussian with mean 1 and shape c^2, drawn with the
Michael-Schucany-Haas transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .quadrature import Quadrature, fixed_gauss
from .rng import RngStream
from .scalar_math import m_infinity_density
from .stats import ks_distance

__all__ = [
    "ASample",
    "ASampleBatch",
    "sample_m_infinity",
    "sample_A",
    "sample_A_batch",
    "m_infinity_cdf",
    "m_infinity_cdf_closed",
    "convergence_check",
]


@dataclass(frozen=True)
class ASample:
    value: float
    hit_atom: bool
    jumps: int


@dataclass(frozen=True)
class ASampleBatch:
    values: np.ndarray
    jumps: np.ndarray

    @property
    def hit_atom(self) -> np.ndarray:
        return self.jumps == 0

    def __len__(self) -> int:
        return self.values.size


def _gen(rng) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def sample_m_infinity(c: float, rng, size=None):
    """Draw from the law of m_c(inf) (inverse Gaussian, mean 1, shape c^2)."""
    if not c > 0:
        raise ValueError("c must be positive")
    g = _gen(rng)
    lam = c * c
    y = g.standard_normal(size) ** 2
    # larger root of the quadratic; the smaller one is its reciprocal (product of roots = 1)
    big = 1.0 + (y + np.sqrt(4.0 * lam * y + y * y)) / (2.0 * lam)
    small = 1.0 / big
    u = g.random(size)
    out = np.where(u <= 1.0 / (1.0 + small), small, big)
    return float(out) if size is None else out


def sample_A(c: float, t: float, rng) -> ASample:
    """One event-driven draw of A_c(t)."""
    if not c > 0:
        raise ValueError("c must be positive")
    if t < c:
        raise ValueError(f"A_c(t) needs t >= c, got t={t}, c={c}")
    g = _gen(rng)
    l0 = l1 = float(c)
    jumps = 0
    while True:
        hold = g.standard_exponential() / l1
        if hold >= t - l0:
            return ASample(l1, jumps == 0, jumps)
        l0 += hold
        l1 += g.standard_exponential() / l0
        jumps += 2


def _event_batch(c: float, t: np.ndarray, g: np.random.Generator) -> ASampleBatch:
    n = t.size
    l0 = np.full(n, float(c))
    l1 = np.full(n, float(c))
    jumps = np.zeros(n, dtype=np.int64)
    idx = np.arange(n)
    while idx.size:
        hold = g.standard_exponential(idx.size) / l1[idx]
        go = hold < t[idx] - l0[idx]
        idx, hold = idx[go], hold[go]
        l0[idx] += hold
        l1[idx] += g.standard_exponential(idx.size) / l0[idx]
        jumps[idx] += 2
    return ASampleBatch(l1, jumps)


def _mixture_batch(c: float, t: np.ndarray, g: np.random.Generator) -> ASampleBatch:
    m = sample_m_infinity(c, g, t.size)
    n_exc = g.poisson(0.5 * m * (t * t - c * c))
    gam = g.standard_gamma(n_exc)
    values = np.sqrt(c * c + 2.0 * m * gam)
    values[n_exc == 0] = c
    return ASampleBatch(values, 2 * n_exc)


def sample_A_batch(c: float, t, rng, size: int | None = None,
                   method: Literal["mixture", "event"] = "mixture") -> ASampleBatch:
    """Independent draws of A_c(t); ``t`` may be a scalar (with ``size``) or an array."""
    if not c > 0:
        raise ValueError("c must be positive")
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        t = np.full(1 if size is None else size, float(t))
    elif size is not None and size != t.size:
        raise ValueError("size does not match t")
    if np.any(t < c):
        raise ValueError("A_c(t) needs t >= c")
    g = _gen(rng)
    if method == "mixture":
        return _mixture_batch(c, t, g)
    if method == "event":
        return _event_batch(c, t, g)
    raise ValueError(f"unknown method {method!r}")


def m_infinity_cdf_closed(c: float, x):
    """Inverse-Gaussian CDF (mean 1, shape c^2); used to cross-check the quadrature CDF."""
    from math import erfc, exp, sqrt

    lam = c * c

    def one(v):
        if v <= 0:
            return 0.0
        r = sqrt(lam / v)
        a = 0.5 * erfc(-r * (v - 1.0) / math.sqrt(2.0))
        # e^{2 lam} Phi(-r (v + 1)) evaluated in a form that does not overflow
        w = r * (v + 1.0) / math.sqrt(2.0)
        b = 0.5 * exp(2.0 * lam - w * w) * _erfcx(w)
        return a + b

    return np.array([one(v) for v in np.atleast_1d(np.asarray(x, dtype=float))])


def _erfcx(w: float) -> float:
    if w < 25.0:
        return math.exp(w * w) * math.erfc(w)
    # asymptotic series, accurate to ~1e-12 for w >= 25
    inv = 1.0 / (w * w)
    return (1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv**3) / (w * math.sqrt(math.pi))


def m_infinity_cdf(c: float, x) -> np.ndarray:
    """CDF of m_c(inf) at ``x``, by quadrature of the density.

    The density is integrated over a dense log-spaced reference grid merged
    with the requested points; consecutive nodes are close so a fixed
    20-point rule per interval is accurate to rounding.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pos = x[x > 0]
    top = max(1e3, float(pos.max()) if pos.size else 1.0, 100.0 / (c * c))
    lo = min(1e-10, float(pos.min()) if pos.size else 1.0)
    ref = np.geomspace(lo, top, 6000)
    nodes = np.unique(np.concatenate([ref, pos]))

    def dens(v):
        return m_infinity_density(c, v)

    head = Quadrature().integrate(dens, 0.0, nodes[0]).value
    pieces = fixed_gauss(dens, nodes, order=20)
    cum = head + np.concatenate([[0.0], np.cumsum(pieces)])
    out = np.zeros_like(x)
    mask = x > 0
    out[mask] = cum[np.searchsorted(nodes, x[mask])]
    return np.clip(out, 0.0, 1.0)


def convergence_check(c: float, t_grid: Sequence[float], n: int, rng,
                      method: Literal["mixture", "event"] = "mixture") -> list[tuple[float, float]]:
    """KS distance between A_c(t)/t (n draws) and the m_c(inf) law, for each t."""
    rng = rng if isinstance(rng, RngStream) else RngStream(int(rng))
    out = []
    for i, t in enumerate(t_grid):
        if t < c:
            raise ValueError("t_grid entries must be >= c")
        draws = sample_A_batch(c, t, rng.child("t", i), size=n, method=method).values / t
        out.append((float(t), ks_distance(draws, lambda s: m_infinity_cdf(c, s))))
    return out
