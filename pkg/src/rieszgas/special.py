"""Upper incomplete gamma function for arbitrary real first argument."""

import numpy as np
from scipy import special

from .errors import ConvergenceError

_CF_THRESHOLD = 1.0
_EPS = 1e-16
_TINY = 1e-300


def _gamma_cf(a, x, max_iter=500):
    """Modified Lentz evaluation of the continued fraction for Gamma(a, x); any real a, x > 0."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / np.where(np.abs(b) < _TINY, _TINY, b)
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            break
    else:
        raise ConvergenceError(f"incomplete gamma continued fraction did not converge (a={a})")
    return np.exp(-x + a * np.log(x)) * h


def upper_gamma(a, x):
    """Gamma(a, x) = int_x^inf t^{a-1} e^{-t} dt for real a and x > 0.

    a > 0 uses the regularised scipy routine, a = 0 the exponential integral.
    For a < 0, large x goes through the continued fraction; small x uses the
    downward recurrence Gamma(a, x) = (Gamma(a+1, x) - x^a e^{-x}) / a started
    from a + n in (0, 1].
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    a = float(a)
    if a > 0:
        out = special.gammaincc(a, x) * special.gamma(a)
    elif a == 0:
        out = special.exp1(x)
    else:
        out = np.empty_like(x)
        big = x >= _CF_THRESHOLD
        if big.any():
            out[big] = _gamma_cf(a, x[big])
        small = ~big
        if small.any():
            xs = x[small]
            n = int(np.ceil(-a))
            a0 = a + n
            g = special.exp1(xs) if a0 == 0 else special.gammaincc(a0, xs) * special.gamma(a0)
            cur = a0
            for _ in range(n):
                cur -= 1.0
                g = (g - xs**cur * np.exp(-xs)) / cur
            out[small] = g
    return float(out[0]) if scalar else out
