"""Adaptive Gauss-Legendre quadrature with a reported error bound.

Each panel is integrated with a 10-point and a 21-point Gauss-Legendre rule;
the higher-order value is kept and the absolute difference is used as the
panel error. The panel with the largest error is bisected until the summed
error falls under ``max(abs_tol, rel_tol * |value|)``.

Semi-infinite ranges are mapped onto a finite one with ``x = a + u / (1 - u)``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["Quadrature", "QuadResult", "QuadratureError", "fixed_gauss"]

_LO_X, _LO_W = np.polynomial.legendre.leggauss(10)
_HI_X, _HI_W = np.polynomial.legendre.leggauss(21)


class QuadratureError(ArithmeticError):
    """Raised when the subdivision budget is spent before convergence."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int


def _panel(f, a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    hi = half * float(np.dot(_HI_W, f(mid + half * _HI_X)))
    lo = half * float(np.dot(_LO_W, f(mid + half * _LO_X)))
    return hi, abs(hi - lo)


def fixed_gauss(f, edges: np.ndarray, order: int = 10) -> np.ndarray:
    """Integrate ``f`` over consecutive intervals ``[edges[i], edges[i+1]]``.

    Fixed-order rule, vectorized over all intervals at once; intended for many
    short intervals (e.g. building a CDF at sorted sample points).
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(nodes) @ w)


@dataclass(frozen=True)
class Quadrature:
    """Tolerances for :meth:`integrate`. ``f`` must accept numpy arrays."""

    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    max_subdivisions: int = 4000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")

    def integrate(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        a: float,
        b: float,
        points: Sequence[float] = (),
    ) -> QuadResult:
        """Integrate ``f`` over ``[a, b]``; ``b`` may be ``inf``.

        ``points`` are interior breakpoints in the original variable. They
        matter for narrow features that a single panel would step over.
        """
        if b < a:
            r = self.integrate(f, b, a, points)
            return QuadResult(-r.value, r.error, r.panels)
        if math.isinf(a):
            if math.isinf(b):
                left = self.integrate(lambda x: f(-x), 0.0, math.inf, [-p for p in points if p < 0])
                right = self.integrate(f, 0.0, math.inf, [p for p in points if p > 0])
                return QuadResult(left.value + right.value, left.error + right.error,
                                  left.panels + right.panels)
            r = self.integrate(lambda x: f(-x), -b, math.inf, [-p for p in points])
            return r

        if math.isinf(b):
            def g(u):
                one_minus = 1.0 - u
                return f(a + u / one_minus) / (one_minus * one_minus)

            cuts = sorted({(p - a) / (1.0 + p - a) for p in points if p > a})
            return self._adapt(g, 0.0, 1.0, cuts)
        cuts = sorted({p for p in points if a < p < b})
        return self._adapt(f, a, b, cuts)

    def _adapt(self, f, a: float, b: float, cuts: list[float]) -> QuadResult:
        edges = [a, *cuts, b]
        heap: list[tuple[float, float, float, float]] = []
        total = 0.0
        err = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = _panel(f, lo, hi)
            total += v
            err += e
            heapq.heappush(heap, (-e, lo, hi, v))
        panels = len(heap)
        while err > max(self.abs_tol, self.rel_tol * abs(total)):
            if panels >= self.max_subdivisions:
                raise QuadratureError(
                    f"no convergence after {panels} panels (error {err:.3g})", total, err
                )
            neg_e, lo, hi, v = heapq.heappop(heap)
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                raise QuadratureError("panel width underflow", total, err)
            v1, e1 = _panel(f, lo, mid)
            v2, e2 = _panel(f, mid, hi)
            total += v1 + v2 - v
            err += e1 + e2 + neg_e
            heapq.heappush(heap, (-e1, lo, mid, v1))
            heapq.heappush(heap, (-e2, mid, hi, v2))
            panels += 1
        # re-sum to drop accumulated drift from the running totals
        total = math.fsum(item[3] for item in heap)
        err = math.fsum(-item[0] for item in heap)
        return QuadResult(total, err, panels)
