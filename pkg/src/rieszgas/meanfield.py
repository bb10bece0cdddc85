"""Equilibrium measures, capacities and closed-form macroscopic densities.

Measures are discretised as piecewise-constant densities on uniform cells.
The interaction matrix is the exact cell-to-cell average of V_s (closed form
in one dimension), so the discrete quadratic form is a Galerkin
approximation of the continuum energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .core import RieszExponent, potential
from .errors import ConvergenceError, RieszError
from .jellium import _box_pair_integral


@dataclass(frozen=True)
class DiscretizedMeasure:
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    total_mass: float
    mu: float = math.nan
    objective: float = math.nan
    history: tuple = field(default=(), repr=False)
    converged: bool = True

    @property
    def masses(self):
        return self.density * self.weights

    def l1_distance(self, other_density):
        """int |density - other| over the grid; other may be a callable or per-node values."""
        vals = other_density(self.nodes if self.nodes.shape[1] > 1 else self.nodes[:, 0]) if callable(other_density) else other_density
        return float(np.sum(np.abs(self.density - np.asarray(vals)) * self.weights))


# ---------------------------------------------------------------------------
# kernels


def _second_primitive(s, u):
    """Even F with F'' = V_s (one dimension), F(0) = 0."""
    u = np.abs(np.asarray(u, dtype=float))
    if s == 0:
        safe = np.where(u > 0, u, 1.0)
        return np.where(u > 0, -0.5 * u**2 * np.log(safe) + 0.75 * u**2, 0.0)
    sign = 1.0 if s > 0 else -1.0
    return sign * u ** (2 - s) / ((1 - s) * (2 - s))


def _kernel_1d(s, centers, h):
    """K[i, j] = h^{-2} int_{cell i} int_{cell j} V_s(x - y) dx dy."""
    delta = centers[:, None] - centers[None, :]
    F = lambda u: _second_primitive(s, u)  # noqa: E731
    return (F(delta + h) - 2 * F(delta) + F(delta - h)) / h**2


def _kernel_2d(s, centers, h):
    g = np.array([-1.0, 1.0]) / (2 * math.sqrt(3)) * h
    sub = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    n = len(centers)
    K = np.zeros((n, n))
    for a in sub:
        for b in sub:
            diff = (centers[:, None, :] + a) - (centers[None, :, :] + b)
            r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            np.fill_diagonal(r, 1.0)
            K += potential(s, r)
    K /= len(sub) ** 2
    self_avg = _box_pair_integral(s, np.array([h, h]), 32) / h**4
    np.fill_diagonal(K, self_avg)
    return K


def _grid(window, n, d):
    if d == 1:
        a, b = window
        h = (b - a) / n
        centers = (a + (np.arange(n) + 0.5) * h)[:, None]
        return centers, np.full(n, h), h
    (ax, bx), (ay, by) = window if np.ndim(window[0]) else (window, window)
    h = (bx - ax) / n
    if not math.isclose((by - ay) / n, h):
        raise RieszError("2D grids need square cells")
    xs = ax + (np.arange(n) + 0.5) * h
    ys = ay + (np.arange(n) + 0.5) * h
    centers = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
    return centers, np.full(n * n, h * h), h


def interaction_matrix(exp: RieszExponent, centers, h):
    if exp.d == 1:
        return _kernel_1d(exp.s, np.asarray(centers).reshape(-1), h)
    if exp.d == 2:
        return _kernel_2d(exp.s, np.asarray(centers), h)
    raise RieszError("mean-field grids are implemented for d = 1 and d = 2")


# ---------------------------------------------------------------------------
# solver


def project_simplex(v, mass):
    """Euclidean projection of v onto {q >= 0, sum q = mass} (water filling)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _objective(K, W, q):
    return 0.5 * float(q @ K @ q) + float(W @ q)


def _active_set(K, W, q, mass, tol=1e-13, max_rounds=500):
    """Solve the KKT system of min 1/2 q'Kq + W'q on the simplex, starting from the support of q."""
    n = len(q)
    S = q > tol * max(q.max(), 1e-300)
    for _ in range(max_rounds):
        idx = np.nonzero(S)[0]
        m = len(idx)
        A = np.zeros((m + 1, m + 1))
        A[:m, :m] = K[np.ix_(idx, idx)]
        A[:m, m] = -1.0
        A[m, :m] = 1.0
        rhs = np.concatenate([-W[idx], [mass]])
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            return None
        qs, mu = sol[:m], sol[m]
        if np.any(qs < 0):
            S[idx[qs < 0]] = False
            continue
        new = np.zeros(n)
        new[idx] = qs
        slack = K @ new + W - mu
        slack[idx] = 0.0
        scale = max(abs(mu), 1.0)
        if slack.min() >= -1e-12 * scale:
            return new, mu
        S[np.argmin(slack)] = True
    return None


def _solve_qp(K, W, mass, q0, max_iter=3000):
    # spectral radius by power iteration is enough for the step size
    L = float(np.max(np.abs(np.linalg.eigvalsh(K))))
    q = project_simplex(q0, mass)
    f = _objective(K, W, q)
    history = [f]
    for _ in range(max_iter):
        new = project_simplex(q - (K @ q + W) / L, mass)
        fn = _objective(K, W, new)
        if fn > f:
            break
        done = np.max(np.abs(new - q)) < 1e-14 * mass
        q, f = new, fn
        history.append(f)
        if done:
            break
    polished = _active_set(K, W, q, mass)
    if polished is not None:
        qp, mu = polished
        fp = _objective(K, W, qp)
        if fp <= f + 1e-14 * max(1.0, abs(f)):
            q, f = qp, fp
            history.append(f)
            return q, mu, tuple(history)
    g = K @ q + W
    supp = q > 0
    return q, float(np.mean(g[supp])), tuple(history)


def _touches_edge(q, d, n):
    tol = 1e-12 * q.max()
    if d == 1:
        return q[0] > tol or q[-1] > tol
    grid = q.reshape(n, n)
    return bool(np.any(grid[0] > tol) or np.any(grid[-1] > tol) or np.any(grid[:, 0] > tol) or np.any(grid[:, -1] > tol))


def solve_equilibrium_measure(W, exp: RieszExponent, mass: float = 1.0, window=(-2.0, 2.0), n: int = 400,
                              confined: bool = False, seed: int | None = None, max_doublings: int = 6):
    """Minimise 1/2 iint V_s dnu dnu + int W dnu over nu >= 0 with the given mass.

    W is a callable on (n_nodes, d) positions (1D: on an array of x) or an
    array of values at the cell centres.  With ``confined`` the window itself
    is the container; otherwise a support touching the window edge doubles
    the window (callable W) or raises.
    """
    if not -2 < exp.s < exp.d:
        raise RieszError("mean-field solver needs -2 < s < d")
    if not mass > 0:
        raise RieszError("mass must be positive")
    d = exp.d
    for _ in range(max_doublings + 1):
        centers, weights, h = _grid(window, n, d)
        if callable(W):
            Wv = np.asarray(W(centers[:, 0] if d == 1 else centers), dtype=float)
        else:
            Wv = np.asarray(W, dtype=float).ravel()
            if Wv.shape != weights.shape:
                raise RieszError("W has the wrong number of grid values")
        if not np.all(np.isfinite(Wv)):
            raise RieszError("W must be finite on the grid")
        K = interaction_matrix(exp, centers, h)
        if seed is None:
            q0 = np.full(len(weights), mass / len(weights))
        else:
            q0 = np.random.default_rng(seed).random(len(weights))
            q0 *= mass / q0.sum()
        q, mu, hist = _solve_qp(K, Wv, mass, q0)
        if confined or not _touches_edge(q, d, n):
            density = q / weights
            meas = DiscretizedMeasure(centers, weights, density, float(q.sum()), mu, hist[-1], hist)
            res = _residual(K, Wv, meas)
            return DiscretizedMeasure(centers, weights, density, float(q.sum()), mu, hist[-1], hist, res < 1e-5)
        if not callable(W):
            raise RieszError("support touches the window boundary; enlarge window")
        window = _doubled(window, d)
    raise ConvergenceError("support still touches the window after repeated enlargement")


def _doubled(window, d):
    if d == 1:
        a, b = window
        c, r = 0.5 * (a + b), b - a
        return (c - r, c + r)
    return tuple(_doubled(w, 1) for w in (window if np.ndim(window[0]) else (window, window)))


def _residual(K, Wv, meas, support_tol=1e-9):
    q = meas.masses
    phi = K @ q + Wv
    supp = meas.density > support_tol * meas.density.max()
    mu_hat = float(np.mean(phi[supp]))
    on = float(np.max(np.abs(phi[supp] - mu_hat)))
    off = float(np.max(np.maximum(mu_hat - phi[~supp], 0.0))) if np.any(~supp) else 0.0
    return max(on, off) / abs(mu_hat)


def measure_potential(measure: DiscretizedMeasure, exp: RieszExponent):
    """nu * V_s at the cell centres (cell-averaged kernel)."""
    h = measure.weights[0] ** (1 / exp.d)
    return interaction_matrix(exp, measure.nodes, h) @ measure.masses


def el_residual(measure: DiscretizedMeasure, W, exp: RieszExponent) -> float:
    """Relative Euler-Lagrange defect.

    Max of |nu*V + W - mu| on the support and of (mu - nu*V - W)_+ off it,
    divided by |mu|, with mu the support mean of nu*V + W.
    """
    h = measure.weights[0] ** (1 / exp.d)
    K = interaction_matrix(exp, measure.nodes, h)
    Wv = np.asarray(W(measure.nodes[:, 0] if exp.d == 1 else measure.nodes) if callable(W) else W, dtype=float).ravel()
    return _residual(K, Wv, measure)


def capacity(window, exp: RieszExponent, n: int = 400) -> float:
    """Riesz s-capacity of an interval (or square) window: 1 / min iint V_s dnu dnu."""
    if not 0 < exp.s < exp.d:
        raise RieszError("capacity needs 0 < s < d")
    meas = solve_equilibrium_measure(lambda x: np.zeros(len(x)), exp, 1.0, window, n, confined=True)
    return 1.0 / (2.0 * meas.objective)


# ---------------------------------------------------------------------------
# closed forms


def _trap_constant(s):
    return special.gamma((4 + s) / 2) / (math.sqrt(math.pi) * special.gamma((3 + s) / 2))


def harmonic_trap_density(s, R, x):
    """Equilibrium density in the confining potential a x^2 (1D, -2 < s < 1) with support [-R, R]."""
    if not -2 < s < 1:
        raise RieszError("harmonic-trap formula needs -2 < s < 1")
    x = np.asarray(x, dtype=float)
    u = 1 - (x / R) ** 2
    out = np.where(u > 0, _trap_constant(s) / R * np.abs(u) ** ((s + 1) / 2), 0.0)
    return float(out) if out.ndim == 0 else out


def _unit_trap_potential(s, x):
    """int nu_1(y) V_s(x - y) dy for the R = 1 trap profile, with algebraic/log end weights."""
    alpha = (s + 1) / 2
    c = _trap_constant(s)
    total = 0.0
    for lo, hi, at_lo in ((-1.0, x, False), (x, 1.0, True)):
        if s == 0:
            # integrand (1+y)^a (1-y)^a (-log|x-y|)
            if at_lo:
                val, _ = integrate.quad(lambda y: -(1 + y) ** alpha, lo, hi, weight="alg-loga", wvar=(0.0, alpha))
            else:
                val, _ = integrate.quad(lambda y: -(1 - y) ** alpha, lo, hi, weight="alg-logb", wvar=(alpha, 0.0))
        else:
            sign = 1.0 if s > 0 else -1.0
            if at_lo:
                val, _ = integrate.quad(lambda y: sign * (1 + y) ** alpha, lo, hi, weight="alg", wvar=(-s, alpha))
            else:
                val, _ = integrate.quad(lambda y: sign * (1 - y) ** alpha, lo, hi, weight="alg", wvar=(alpha, -s))
        total += val
    return c * total


def harmonic_trap_radius(s, a=1.0):
    """Support radius for W = a x^2.

    The unit profile has potential A - B x^2 on [-1, 1]; by homogeneity the
    radius-R profile has R^{-s}(A - B x^2 / R^2), and the Euler-Lagrange
    equation forces B R^{-s-2} = a.
    """
    if s == 0:
        B = 1.0
    else:
        x = 0.5
        B = (_unit_trap_potential(s, 0.0) - _unit_trap_potential(s, x)) / x**2
    return (B / a) ** (1 / (s + 2))


def short_range_profile(W, s: float, e_of_s: float, mass: float = 1.0, weights=None, d: int = 1,
                        bracket=None, tol=1e-13):
    """Local-density-approximation profile for s > d: nu = ((mu - W)_+ d / (e(s)(d+s)))^{d/s}.

    W holds values at grid nodes with cell volumes ``weights``.  Returns
    (density values, mu_W); mu_W solves sum(nu * weights) = mass by bisection.
    """
    if not s > d:
        raise RieszError("short-range profile needs s > d")
    if not e_of_s > 0:
        raise RieszError("e(s) must be positive")
    W = np.asarray(W, dtype=float)
    w = np.ones_like(W) if weights is None else np.asarray(weights, dtype=float)
    p = d / s
    c = (d / (e_of_s * (d + s))) ** p

    def profile(mu):
        return c * np.clip(mu - W, 0, None) ** p

    def excess(mu):
        return float(np.sum(profile(mu) * w)) - mass

    lo, hi = bracket if bracket is not None else (W.min(), W.min() + 1.0)
    if bracket is None:
        while excess(hi) < 0:
            hi = W.min() + 2 * (hi - W.min())
            if hi - W.min() > 1e300:
                raise RieszError("no root of the mass equation")
    if not (excess(lo) <= 0 <= excess(hi)):
        raise RieszError("no root of the mass equation in the bracket")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    mu = 0.5 * (lo + hi)
    return profile(mu), mu
