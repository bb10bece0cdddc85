"""Metropolis sampling of canonical and grand-canonical Gibbs measures.

Samplers are generators of frame dicts ``{"sweep", "n", "coordinates",
"energy"}``.  Diagnostics (acceptance out of range, energy drift) arrive as
dicts carrying a ``"warning"`` key instead of coordinates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Domain, PointConfiguration, RieszExponent, potential, riesz_energy
from .errors import RieszError
from .jellium import JelliumSystem, background_potential, background_self_energy, jellium_energy
from .lattice import Lattice, lattice_catalog, madelung, periodic_energy, periodic_potential

GUARD = 1e-12
DRIFT_CHECK_EVERY = 100
DRIFT_TOL = 1e-8
GC_MAX_SWEEP = 10_000


@dataclass(frozen=True)
class SamplerConfig:
    beta: float
    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    move_scale: float = 0.5
    mu: float | None = None
    seed: int = 0
    tune: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise RieszError("beta must be positive")
        if not self.sweeps > self.burn_in >= 0:
            raise RieszError("need sweeps > burn_in >= 0")
        if self.thinning < 1:
            raise RieszError("thinning must be >= 1")
        if not self.move_scale > 0:
            raise RieszError("move scale must be positive")

    @property
    def activity(self):
        return math.exp(self.beta * self.mu)


# ---------------------------------------------------------------------------
# energy models


class _Model:
    """Energy bookkeeping for one-particle updates.

    Subclasses provide ``pair_terms(x, y)`` (interaction of a position y with
    every row of x), ``one_body(y)`` and ``constant(n)``.
    """

    domain: Domain
    has_one_body = False

    @property
    def dim(self):
        return self.domain.dim

    @property
    def volume(self):
        return self.domain.volume

    @property
    def periodic(self):
        return self.domain.is_periodic

    def one_body(self, y):
        return 0.0

    def constant(self, n):
        return 0.0

    def wrap(self, y):
        return self.domain.reduce(y)[0] if self.periodic else y

    def inside(self, y):
        return True if self.periodic else bool(self.domain.contains(y[None, :], tol=0.0)[0])

    def separations(self, x, y):
        delta = y - x
        if self.periodic:
            delta = self.domain.min_image(delta)
        return np.sqrt(np.einsum("ij,ij->i", delta, delta))

    def total(self, x):
        n = len(x)
        pair = 0.0
        for i in range(1, n):
            pair += float(np.sum(self.pair_terms(x[:i], x[i])))
        return pair + sum(self.one_body(xi) for xi in x) + self.constant(n)

    def sample_point(self, rng):
        return self.domain.sample_uniform(rng, 1)[0]


class IdealModel(_Model):
    """Non-interacting control (V = 0)."""

    def __init__(self, domain: Domain):
        self.domain = domain

    def pair_terms(self, x, y):
        return np.zeros(len(x))


class ShortRangeModel(_Model):
    def __init__(self, domain: Domain, exp: RieszExponent):
        self.domain, self.exp = domain, exp

    def pair_terms(self, x, y):
        return potential(self.exp.s, self.separations(x, y))

    def total(self, x):
        return riesz_energy(PointConfiguration(x, validate=False), self.exp) if len(x) > 1 else 0.0


class JelliumModel(_Model):
    def __init__(self, system: JelliumSystem):
        self.system = system
        self.domain = system.domain
        self._self = background_self_energy(system)

    has_one_body = True

    def pair_terms(self, x, y):
        return potential(self.system.s, self.separations(x, y))

    def one_body(self, y):
        return -self.system.rho_b * background_potential(self.system, y)

    def constant(self, n):
        return self._self

    def total(self, x):
        return jellium_energy(self.system, PointConfiguration(x, self.domain, validate=False))


class PeriodicModel(_Model):
    def __init__(self, lattice: Lattice, ell: float, exp: RieszExponent):
        self.lattice, self.ell, self.exp = lattice, ell, exp
        self.domain = Domain.periodic(lattice, ell)
        self._big = lattice.scaled(ell)
        self._madelung = madelung(self._big, exp.s)

    def pair_terms(self, x, y):
        if len(x) == 0:
            return np.zeros(0)
        return np.atleast_1d(periodic_potential(self._big, self.exp.s, (y - x).reshape(-1, self.dim)))

    def constant(self, n):
        return n * self._madelung / 2.0

    def total(self, x):
        return periodic_energy(self.lattice, self.ell, self.exp.s, x)


class CircularLogGas(_Model):
    """N charges on a circle of circumference N (unit density).

    Energy -sum_{j<k} log|e^{i t_j} - e^{i t_k}| with t = 2 pi x / N, i.e. the
    integrand of the circular-ensemble partition function.
    """

    def __init__(self, n: int):
        if n < 1:
            raise RieszError("need at least one particle")
        self.n = n
        self.domain = Domain.periodic(lattice_catalog("integers"), float(n))

    def separations(self, x, y):
        # chord length between the angles
        return np.abs(2.0 * np.sin(math.pi * (y[0] - x[:, 0]) / self.n))

    def pair_terms(self, x, y):
        return -np.log(self.separations(x, y))

    def wrap(self, y):
        return np.mod(y, self.n)

    def guard_distance(self, x, y):
        # arc distance on the circle of circumference n
        d = np.abs(y[0] - x[:, 0]) % self.n
        return np.minimum(d, self.n - d)


def make_model(problem, exp: RieszExponent | None = None):
    """Build an energy model from a domain, Jellium system, (lattice, ell) pair or CircularLogGas."""
    if isinstance(problem, _Model):
        return problem
    if isinstance(problem, JelliumSystem):
        return JelliumModel(problem)
    if isinstance(problem, tuple) and isinstance(problem[0], Lattice):
        return PeriodicModel(problem[0], problem[1], exp)
    if isinstance(problem, Domain):
        if exp is None:
            return IdealModel(problem)
        if problem.is_periodic:
            return PeriodicModel(problem.lattice, 1.0, exp)
        return ShortRangeModel(problem, exp)
    raise RieszError(f"unsupported problem type {type(problem).__name__}")


# ---------------------------------------------------------------------------
# Metropolis moves


def _accept(log_ratio, rng):
    return log_ratio >= 0 or rng.random() < math.exp(log_ratio)


def metropolis_move(model, x, i, y, beta, rng):
    """Attempt to move particle i of x (in place) to y; returns (accepted, energy change)."""
    y = model.wrap(y)
    if not model.inside(y):
        return False, 0.0
    mask = np.ones(len(x), dtype=bool)
    mask[i] = False
    others = x[mask]
    if len(others):
        guard = model.guard_distance(others, y) if hasattr(model, "guard_distance") else model.separations(others, y)
        if guard.min() < GUARD:
            return False, 0.0
    delta = float(model.pair_terms(others, y).sum() - model.pair_terms(others, x[i]).sum())
    if model.has_one_body:
        delta += model.one_body(y) - model.one_body(x[i])
    if _accept(-beta * delta, rng):
        x[i] = y
        return True, delta
    return False, 0.0


def _initial(model, n, rng, start):
    if start is not None:
        x = np.array(start, dtype=float).reshape(n, model.dim)
    else:
        x = model.domain.sample_uniform(rng, n)
    return model.domain.reduce(x) if model.periodic else x


def _cell_scale(model):
    lo, hi = model.domain.bounding_box()
    return float(np.min(hi - lo)) / 2


def sample_canonical(problem, n: int, cfg: SamplerConfig, exp: RieszExponent | None = None, start=None):
    """Single-particle Metropolis chain; one sweep is n attempted moves."""
    model = make_model(problem, exp)
    if n < 1:
        raise RieszError("need at least one particle")
    if isinstance(model, JelliumModel):
        model.system.check_neutral(n)
    rng = np.random.default_rng(cfg.seed)
    x = _initial(model, n, rng, start)
    energy = model.total(x)
    scale = min(cfg.move_scale, _cell_scale(model))
    acc = tried = 0
    for sweep in range(1, cfg.sweeps + 1):
        for _ in range(n):
            i = int(rng.integers(n))
            y = x[i] + scale * (2 * rng.random(model.dim) - 1)
            ok, de = metropolis_move(model, x, i, y, cfg.beta, rng)
            energy += de
            acc += ok
            tried += 1
        if sweep <= cfg.burn_in:
            if cfg.tune and sweep % 10 == 0:
                scale = _tuned(scale, acc / tried, _cell_scale(model))
                acc = tried = 0
            if sweep == cfg.burn_in:
                acc = tried = 0
            continue
        if sweep % DRIFT_CHECK_EVERY == 0:
            exact = model.total(x)
            if abs(exact - energy) > DRIFT_TOL * max(1.0, abs(exact)):
                yield {"sweep": sweep, "warning": f"energy drift {exact - energy:.3e} corrected"}
            energy = exact
        if (sweep - cfg.burn_in) % cfg.thinning == 0:
            yield {"sweep": sweep, "n": n, "coordinates": x.copy(), "energy": energy}
    yield from _acceptance_warning(cfg.sweeps, acc, tried)


def _tuned(scale, rate, cap):
    if rate < 0.3:
        scale *= 0.7
    elif rate > 0.5:
        scale *= 1.4
    return min(scale, cap)


def _acceptance_warning(sweep, acc, tried):
    if tried:
        rate = acc / tried
        if not 0.05 <= rate <= 0.95:
            msg = f"acceptance rate {rate:.3f} outside [0.05, 0.95]"
            warnings.warn(msg, RuntimeWarning, stacklevel=3)
            yield {"sweep": sweep, "warning": msg, "acceptance": rate}


def sample_grand_canonical(problem, cfg: SamplerConfig, exp: RieszExponent | None = None, start=None):
    """Displacement plus insertion/deletion moves at activity exp(beta mu).

    Each elementary step is a displacement with probability 1/2, otherwise an
    insertion or a deletion with equal probability.  A sweep is a fixed number
    of steps: max(1, len(start), ceil(z |Omega|)), capped at GC_MAX_SWEEP.
    """
    if cfg.mu is None:
        raise RieszError("grand-canonical sampling needs mu")
    model = make_model(problem, exp)
    if isinstance(model, JelliumModel) and model.system.s <= 0:
        raise RieszError("no grand-canonical Jellium model for s <= 0")
    if isinstance(model, ShortRangeModel) and not model.exp.s > model.dim:
        raise RieszError("grand-canonical free-domain sampling needs s > d")
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros((0, model.dim)) if start is None else np.array(start, dtype=float).reshape(-1, model.dim)
    energy = model.total(x)
    zv = cfg.activity * model.volume
    scale = min(cfg.move_scale, _cell_scale(model))
    # frames must be taken after a state-independent number of steps, so the
    # sweep length is fixed once from the start and the ideal-gas mean count
    steps = max(1, len(x), min(math.ceil(zv), GC_MAX_SWEEP))
    acc = tried = 0
    for sweep in range(1, cfg.sweeps + 1):
        for _ in range(steps):
            u = rng.random()
            n = len(x)
            if u < 0.5:
                if n == 0:
                    continue
                i = int(rng.integers(n))
                y = x[i] + scale * (2 * rng.random(model.dim) - 1)
                ok, de = metropolis_move(model, x, i, y, cfg.beta, rng)
                energy += de
                acc += ok
                tried += 1
            elif u < 0.75:
                y = model.sample_point(rng)
                if n and model.separations(x, y).min() < GUARD:
                    continue
                de = float(np.sum(model.pair_terms(x, y))) + model.one_body(y)
                if _accept(math.log(zv / (n + 1)) - cfg.beta * de, rng):
                    x = np.vstack([x, y])
                    energy += de
            elif n:
                i = int(rng.integers(n))
                rest = np.delete(x, i, axis=0)
                de = -(float(np.sum(model.pair_terms(rest, x[i]))) + model.one_body(x[i]))
                if _accept(math.log(n / zv) - cfg.beta * de, rng):
                    x = rest
                    energy += de
        if sweep <= cfg.burn_in:
            if cfg.tune and sweep % 10 == 0 and tried:
                scale = _tuned(scale, acc / tried, _cell_scale(model))
                acc = tried = 0
            if sweep == cfg.burn_in:
                acc = tried = 0
            continue
        if sweep % DRIFT_CHECK_EVERY == 0:
            exact = model.total(x)
            if abs(exact - energy) > DRIFT_TOL * max(1.0, abs(exact)):
                yield {"sweep": sweep, "warning": f"energy drift {exact - energy:.3e} corrected"}
            energy = exact
        if (sweep - cfg.burn_in) % cfg.thinning == 0:
            yield {"sweep": sweep, "n": len(x), "coordinates": x.copy(), "energy": energy}
    yield from _acceptance_warning(cfg.sweeps, acc, tried)


def frames(stream):
    """Drop warning records from a sample stream."""
    return [f for f in stream if "coordinates" in f]


# ---------------------------------------------------------------------------
# discrete detailed-balance check


class _RingModel:
    """Two or more particles on a ring of integer sites; used to audit the Metropolis step."""

    def __init__(self, sites, exp):
        self.sites, self.exp = sites, exp
        self.dim = 1
        self.domain = Domain.periodic(lattice_catalog("integers"), float(sites))

    def wrap(self, y):
        return np.mod(np.round(y), self.sites)

    def inside(self, y):
        return True

    def separations(self, x, y):
        d = np.abs(y[0] - x[:, 0]) % self.sites
        return np.minimum(d, self.sites - d)

    def pair_terms(self, x, y):
        return potential(self.exp.s, self.separations(x, y))

    def one_body(self, y):
        return 0.0

    has_one_body = False

    def energy(self, state):
        x = np.asarray(state, dtype=float).reshape(-1, 1)
        return sum(float(np.sum(self.pair_terms(x[:i], x[i]))) for i in range(1, len(x)))


def discrete_transition_counts(sites=10, beta=1.0, s=1.0, steps=10**6, seed=0, max_hop=2):
    """Run the Metropolis step on 2 particles snapped to a ring of sites.

    Returns (counts, states, weights): counts[a, b] is the number of observed
    transitions a -> b between ordered-pair states, and weights the exact
    Boltzmann weights exp(-beta E).
    """
    model = _RingModel(sites, RieszExponent(s, 1))
    states = [(a, b) for a in range(sites) for b in range(sites) if a != b]
    index = {st: k for k, st in enumerate(states)}
    rng = np.random.default_rng(seed)
    x = np.array([[0.0], [sites // 2]])
    counts = np.zeros((len(states), len(states)), dtype=np.int64)
    hops = [h for h in range(-max_hop, max_hop + 1) if h != 0]
    cur = index[(0, sites // 2)]
    for _ in range(steps):
        i = int(rng.integers(2))
        y = x[i] + hops[int(rng.integers(len(hops)))]
        metropolis_move(model, x, i, y, beta, rng)
        new = index[(int(x[0, 0]), int(x[1, 0]))]
        counts[cur, new] += 1
        cur = new
    weights = np.array([math.exp(-beta * model.energy(st)) for st in states])
    return counts, states, weights / weights.sum()


def detailed_balance_statistic(counts):
    """Sum over i<j of (C_ij - C_ji)^2 / (C_ij + C_ji) and its degrees of freedom.

    Under detailed balance each term is asymptotically chi-square with one degree of freedom.
    """
    c = counts.astype(float)
    i, j = np.triu_indices(len(c), k=1)
    tot = c[i, j] + c[j, i]
    keep = tot > 0
    chi2 = float(np.sum((c[i, j][keep] - c[j, i][keep]) ** 2 / tot[keep]))
    return chi2, int(keep.sum())
