"""Adaptive Gauss-Legendre quadrature on intervals and rectangles.

Both routines use an embedded low/high order rule pair (GL-7 against GL-15)
on every panel.  Panels with the largest error estimates are subdivided
until the summed estimate meets the requested tolerance.  Integrands must
accept numpy arrays and evaluate elementwise.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

_GL_LO = leggauss(7)
_GL_HI = leggauss(15)


class QuadratureError(Exception):
    """Subdivision limit reached before the tolerance was met."""

    def __init__(self, message, value, error_bound):
        super().__init__(message)
        self.value = value
        self.error_bound = error_bound


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivision_depth: int = 30

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivision_depth > 30:
            raise ValueError("max_subdivision_depth is capped at 30")


def _panel_rule_1d(f, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    xs_lo = mid + half * _GL_LO[0]
    xs_hi = mid + half * _GL_HI[0]
    coarse = half * float(np.dot(_GL_LO[1], f(xs_lo)))
    fine = half * float(np.dot(_GL_HI[1], f(xs_hi)))
    return fine, abs(fine - coarse)


def quad1d(f, lo: float, hi: float, config: QuadratureConfig | None = None):
    """Integrate ``f`` over ``[lo, hi]``; returns ``(value, error_bound)``."""
    config = config or QuadratureConfig()
    value, err = _panel_rule_1d(f, lo, hi)
    # heap of (-error, depth, lo, hi, value, error)
    heap = [(-err, 0, lo, hi, value, err)]
    total = value
    total_err = err
    while total_err > max(config.abs_tol, config.rel_tol * abs(total)):
        neg_err, depth, a, b, v, e = heapq.heappop(heap)
        if depth >= config.max_subdivision_depth:
            heapq.heappush(heap, (neg_err, depth, a, b, v, e))
            raise QuadratureError(
                "1d quadrature depth exhausted", total, total_err
            )
        m = 0.5 * (a + b)
        vl, el = _panel_rule_1d(f, a, m)
        vr, er = _panel_rule_1d(f, m, b)
        total += vl + vr - v
        total_err += el + er - e
        heapq.heappush(heap, (-el, depth + 1, a, m, vl, el))
        heapq.heappush(heap, (-er, depth + 1, m, b, vr, er))
    return total, total_err


def _panel_rule_2d(f, ax, bx, ay, by):
    hx, mx = 0.5 * (bx - ax), 0.5 * (bx + ax)
    hy, my = 0.5 * (by - ay), 0.5 * (by + ay)

    def tensor(nodes, weights):
        xs = mx + hx * nodes
        ys = my + hy * nodes
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        vals = f(X, Y)
        return hx * hy * float(weights @ vals @ weights)

    coarse = tensor(*_GL_LO)
    fine = tensor(*_GL_HI)
    return fine, abs(fine - coarse)


def quad2d(f, domain=((0.0, 1.0), (0.0, 1.0)), config: QuadratureConfig | None = None):
    """Integrate ``f(x, y)`` over a rectangle; returns ``(value, error_bound)``.

    ``domain`` is ``((x_lo, x_hi), (y_lo, y_hi))``.  On depth exhaustion a
    :class:`QuadratureError` carrying the best value and bound is raised.
    """
    config = config or QuadratureConfig()
    (ax, bx), (ay, by) = domain
    value, err = _panel_rule_2d(f, ax, bx, ay, by)
    heap = [(-err, 0, ax, bx, ay, by, value, err)]
    total = value
    total_err = err
    while total_err > max(config.abs_tol, config.rel_tol * abs(total)):
        neg_err, depth, x0, x1, y0, y1, v, e = heapq.heappop(heap)
        if depth >= config.max_subdivision_depth:
            heapq.heappush(heap, (neg_err, depth, x0, x1, y0, y1, v, e))
            raise QuadratureError(
                "2d quadrature depth exhausted", total, total_err
            )
        xm = 0.5 * (x0 + x1)
        ym = 0.5 * (y0 + y1)
        quads = [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]
        total -= v
        total_err -= e
        for qx0, qx1, qy0, qy1 in quads:
            vq, eq = _panel_rule_2d(f, qx0, qx1, qy0, qy1)
            total += vq
            total_err += eq
            heapq.heappush(heap, (-eq, depth + 1, qx0, qx1, qy0, qy1, vq, eq))
    return total, total_err
