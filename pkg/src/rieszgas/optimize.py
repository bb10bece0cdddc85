"""Zero-temperature minimisation: multistart projected Barzilai-Borwein descent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .core import Domain, PointConfiguration, RieszExponent, riesz_energy, riesz_energy_gradient
from .errors import RieszError
from .jellium import JelliumSystem, jellium_energy, jellium_energy_gradient
from .lattice import Lattice, periodic_energy, periodic_energy_gradient


@dataclass(frozen=True)
class OptimizerSettings:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-9
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    restarts: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.gradient_tolerance > 0:
            raise RieszError("gradient tolerance must be positive")
        if self.restarts < 1:
            raise RieszError("need at least one restart")
        if not 0 < self.backtrack < 1:
            raise RieszError("backtracking factor must lie in (0, 1)")


@dataclass(frozen=True)
class MinimizationResult:
    configuration: PointConfiguration
    energy: float
    gradient_norm: float
    restart_index: int
    converged: bool
    iterations: int = 0
    history: tuple = field(default=(), repr=False)  # best energy after each restart


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class ShortRange:
    """Free pair energy of points confined to a closed domain."""

    domain: Domain

    @property
    def dim(self):
        return self.domain.dim

    def energy(self, x, exp):
        return riesz_energy(x, exp)

    def gradient(self, x, exp):
        return riesz_energy_gradient(x, exp.s)

    def project(self, x, exp):
        return self.domain.project(x)

    def configuration(self, x):
        return PointConfiguration(x, self.domain, validate=False)

    def lattice_start(self, n):
        return _grid_start(self.domain, n)


@dataclass(frozen=True)
class JelliumProblem:
    system: JelliumSystem

    @property
    def domain(self):
        return self.system.domain

    @property
    def dim(self):
        return self.domain.dim

    def energy(self, x, exp):
        return jellium_energy(self.system, PointConfiguration(x, self.domain, validate=False))

    def gradient(self, x, exp):
        return jellium_energy_gradient(self.system, x)

    def project(self, x, exp):
        y = self.domain.project(x)
        if exp.s > 0:
            # the background force is infinite on the boundary when s > 0; stay strictly inside
            lo, hi = self.domain.bounding_box()
            c = 0.5 * (lo + hi)
            y = c + (1 - 1e-12) * (y - c)
        return y

    def configuration(self, x):
        return PointConfiguration(x, self.domain, validate=False)

    def lattice_start(self, n):
        return _grid_start(self.domain, n)


@dataclass(frozen=True)
class Periodic:
    lattice: Lattice
    ell: float = 1.0

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def domain(self):
        return Domain.periodic(self.lattice, self.ell)

    def energy(self, x, exp):
        return periodic_energy(self.lattice, self.ell, exp.s, x)

    def gradient(self, x, exp):
        return periodic_energy_gradient(self.lattice, self.ell, exp.s, x)

    def project(self, x, exp):
        return x

    def configuration(self, x):
        return PointConfiguration(x, self.domain, validate=False)

    def lattice_start(self, n):
        k = round(n ** (1 / self.dim))
        if k**self.dim != n:
            return None
        frac = np.stack(np.meshgrid(*[np.arange(k) / k] * self.dim, indexing="ij"), -1).reshape(-1, self.dim)
        return (frac + 0.5 / k) @ self.lattice.scaled(self.ell).basis.T


def _grid_start(domain, n):
    lo, hi = domain.bounding_box()
    d = domain.dim
    k = round(n ** (1 / d))
    if k**d != n:
        return None
    axes = [lo[i] + (np.arange(k) + 0.5) * (hi[i] - lo[i]) / k for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    return pts if np.all(domain.contains(pts)) else None


def _as_problem(problem):
    if isinstance(problem, (ShortRange, JelliumProblem, Periodic)):
        return problem
    if isinstance(problem, JelliumSystem):
        return JelliumProblem(problem)
    if isinstance(problem, Domain):
        return Periodic(problem.lattice, 1.0) if problem.is_periodic else ShortRange(problem)
    if isinstance(problem, Lattice):
        return Periodic(problem, 1.0)
    raise RieszError(f"unsupported problem type {type(problem).__name__}")


# ---------------------------------------------------------------------------
# descent


def _stationarity(prob, x, g, exp):
    """Max component of the projected-gradient step; the plain gradient when unconstrained."""
    if isinstance(prob, Periodic):
        return float(np.max(np.abs(g))) if g.size else 0.0
    return float(np.max(np.abs(prob.project(x - g, exp) - x))) if g.size else 0.0


def _descend(prob, x, exp, st: OptimizerSettings):
    x = prob.project(x, exp)
    f = prob.energy(x, exp)
    g = prob.gradient(x, exp)
    step = 1.0 / max(float(np.max(np.abs(g))), 1.0)
    it = 0
    for it in range(1, st.max_iterations + 1):
        if _stationarity(prob, x, g, exp) < st.gradient_tolerance:
            return x, f, g, True, it
        t = step
        for _ in range(st.max_backtracks):
            y = prob.project(x - t * g, exp)
            try:
                fy = prob.energy(y, exp)
            except (ValueError, ZeroDivisionError):
                fy = math.inf
            # projected Armijo condition
            if fy <= f - st.armijo / t * float(np.sum((x - y) ** 2)):
                break
            t *= st.backtrack
        else:
            return x, f, g, _stationarity(prob, x, g, exp) < st.gradient_tolerance, it
        gy = prob.gradient(y, exp)
        dx, dg = (y - x).ravel(), (gy - g).ravel()
        curv = float(dx @ dg)
        step = float(dx @ dx) / curv if curv > 0 else 10 * t
        step = min(max(step, 1e-12), 1e6)
        if fy == f and np.array_equal(x, y):
            return x, f, g, _stationarity(prob, x, g, exp) < st.gradient_tolerance, it
        x, f, g = y, fy, gy
    return x, f, g, _stationarity(prob, x, g, exp) < st.gradient_tolerance, it


def _start(prob, n, rng, restart):
    if restart == 0:
        x0 = prob.lattice_start(n)
        if x0 is not None:
            return x0
    return prob.domain.sample_uniform(rng, n)


def minimize_energy(problem, n: int, exp: RieszExponent, settings: OptimizerSettings = OptimizerSettings()):
    """Best local minimum over restarts; restart 0 starts from a regular grid when one fits."""
    prob = _as_problem(problem)
    if n < 1:
        raise RieszError("need at least one point")
    if exp.d != prob.dim:
        raise RieszError("exponent dimension does not match the problem")
    if isinstance(prob, JelliumProblem):
        prob.system.check_neutral(n)
    seeds = np.random.SeedSequence(settings.seed).spawn(settings.restarts)
    best, history = None, []
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        x0 = _start(prob, n, rng, r)
        if n == 1 and isinstance(prob, (ShortRange, Periodic)):
            x, f, g, ok, it = prob.project(x0, exp), prob.energy(prob.project(x0, exp), exp), np.zeros_like(x0), True, 0
        else:
            x, f, g, ok, it = _descend(prob, x0, exp, settings)
        cand = (f, r, x, g, ok, it)
        if best is None or f < best[0]:
            best = cand
        history.append(best[0])
    f, r, x, g, ok, it = best
    config = prob.configuration(x)
    # re-evaluate on the stored (possibly cell-reduced) coordinates
    energy = prob.energy(config.coordinates, exp)
    return MinimizationResult(config, energy, _stationarity(prob, x, g, exp), r, ok, it, tuple(history))


def minimize_grand_canonical(problem, mu: float, exp: RieszExponent, n_range, settings: OptimizerSettings = OptimizerSettings()):
    """argmin over n in n_range of E(n) - mu n; ties go to the smaller n."""
    prob = _as_problem(problem)
    if isinstance(prob, JelliumProblem) and exp.s <= 0:
        raise RieszError("no grand-canonical Jellium model for s <= 0")
    ns = sorted(set(int(n) for n in n_range))
    if not ns or ns[0] < 0:
        raise RieszError("particle-number range must be finite and non-negative")
    best = None
    for n in ns:
        if n == 0:
            e = _empty_energy(prob)
            res = MinimizationResult(prob.configuration(np.zeros((0, prob.dim))), e, 0.0, 0, True)
        else:
            res = minimize_energy(prob, n, exp, settings)
        val = res.energy - mu * n
        if best is None or val < best[0] - 1e-12 * max(1.0, abs(val)):
            best = (val, n, res)
    return best[1], best[2]


def _empty_energy(prob):
    if isinstance(prob, JelliumProblem):
        from .jellium import background_self_energy

        return background_self_energy(prob.system)
    return 0.0


# ---------------------------------------------------------------------------
# diagnostics


def _periodic_images(x, basis):
    d = x.shape[1]
    shifts = np.stack(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij"), -1).reshape(-1, d) @ basis.T
    return (x[None, :, :] + shifts[:, None, :]).reshape(-1, d)


def _nearest_distance_fn(config):
    x = config.coordinates
    dom = config.domain
    pts = _periodic_images(x, dom.lattice.basis) if dom is not None and dom.is_periodic else x
    tree = cKDTree(pts)
    return lambda y: tree.query(np.atleast_2d(y))[0]


def _covering_radius(config, grid):
    x = config.coordinates
    dom = config.domain
    if dom is None:
        raise RieszError("covering radius needs a domain")
    if dom.dim == 1:
        p = np.sort(x[:, 0])
        if dom.is_periodic:
            L = dom.lattice.covolume
            gaps = np.diff(np.concatenate([p, [p[0] + L]]))
            return float(gaps.max() / 2)
        lo, hi = dom.lower[0], dom.upper[0]
        return float(max(p[0] - lo, hi - p[-1], np.diff(p).max(initial=0) / 2))
    near = _nearest_distance_fn(config)
    if dom.is_periodic:
        frac = np.stack(np.meshgrid(*[np.arange(grid) / grid] * dom.dim, indexing="ij"), -1).reshape(-1, dom.dim)
        y = frac @ dom.lattice.basis.T
    else:
        lo, hi = dom.bounding_box()
        axes = [np.linspace(lo[i], hi[i], grid) for i in range(dom.dim)]
        y = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dom.dim)
        y = y[dom.contains(y)]
    dist = near(y)
    best = float(dist.max())
    for k in np.argsort(dist)[-5:]:
        # local refinement of the grid maximum (projected onto the domain)
        res = _scipy_minimize(
            lambda z: -near(dom.project(z[None, :]))[0], y[k], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12}
        )
        best = max(best, -float(res.fun))
    return best


def _lattice_fit(x, reference: Lattice):
    best = math.inf
    for t in x[: min(len(x), 8)]:
        for _ in range(50):
            r = reference.min_image(x - t)
            shift = r.mean(axis=0)
            t = t + shift
            if np.max(np.abs(shift)) < 1e-14:
                break
        best = min(best, math.sqrt(np.mean(np.sum(reference.min_image(x - t) ** 2, axis=1))))
    return best


def crystallinity_report(config: PointConfiguration, reference: Lattice | None = None, grid: int = 48):
    """min pairwise distance, covering radius and RMS distance to the best translate of a reference lattice."""
    x = config.coordinates
    if len(x) < 2:
        raise RieszError("need at least two points")
    dom = config.domain
    if dom is not None and dom.is_periodic:
        i, j = np.triu_indices(len(x), k=1)
        dmin = float(np.linalg.norm(dom.min_image(x[i] - x[j]), axis=1).min())
    else:
        dmin = float(pdist(x).min())
    report = {"min_distance": dmin, "covering_radius": _covering_radius(config, grid) if dom is not None else None}
    report["lattice_fit_error"] = _lattice_fit(x, reference) if reference is not None else None
    return report
