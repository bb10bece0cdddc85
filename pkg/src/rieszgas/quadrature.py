"""Gauss-Legendre rules on graded panels."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, RieszError


@dataclass(frozen=True)
class QuadratureSettings:
    """nodes_per_axis is the first-pass node budget per axis; refinement doubles it."""

    nodes_per_axis: int = 64
    rule: str = "gaussLegendre"
    rtol: float = 1e-9
    max_refinements: int = 5

    def __post_init__(self):
        if self.nodes_per_axis < 8:
            raise RieszError("nodes_per_axis must be >= 8")
        if self.rule != "gaussLegendre":
            raise RieszError(f"unsupported quadrature rule: {self.rule}")


DEFAULT_QUADRATURE = QuadratureSettings()


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def graded_breaks(length, scale):
    """Panel breakpoints on [0, length], geometrically refined toward 0 at the given scale."""
    if length <= 0:
        return np.array([0.0, 0.0])
    scale = max(scale, length * 1e-14)
    pts = [0.0]
    b = scale
    while b < length:
        pts.append(b)
        b *= 2.0
    pts.append(length)
    return np.array(pts)


def panel_rule(breaks, order):
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = gauss_legendre(a, b, order)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def refine(evaluate, settings: QuadratureSettings, start_order=8, scale=0.0):
    """Call evaluate(order) with doubling order until the relative change is below rtol.

    ``scale`` sets the magnitude the tolerance is measured against when the
    value itself comes from cancelling terms and may be near zero.
    """
    order = max(start_order, 4)
    prev = evaluate(order)
    for _ in range(settings.max_refinements):
        order *= 2
        cur = evaluate(order)
        if abs(cur - prev) <= settings.rtol * max(abs(cur), scale, 1e-300) or cur == prev:
            return cur
        prev = cur
    raise ConvergenceError("quadrature did not converge after the maximum number of refinements")
