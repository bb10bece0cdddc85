"""Riesz potential, domains, point configurations and finite-configuration energies.

Sign conventions for the pair potential V_s:

    V_s(r) = r^{-s}          s > 0
    V_s(r) = -log r          s = 0
    V_s(r) = -r^{-s}         -2 < s < 0

so that V_s is decreasing in r on every branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import RieszError, SingularityError

SHORT_RANGE = "shortRange"
LONG_RANGE_POSITIVE = "longRangePositive"
LOG_CASE = "logCase"
NEGATIVE = "negative"


@dataclass(frozen=True)
class RieszExponent:
    s: float
    d: int = 1

    def __post_init__(self):
        if not (self.d >= 1 and int(self.d) == self.d):
            raise RieszError(f"dimension must be a positive integer, got {self.d}")
        if not self.s > -2:
            raise RieszError(f"exponent must satisfy s > -2, got {self.s}")

    @property
    def branch(self) -> str:
        if self.s > self.d:
            return SHORT_RANGE
        if self.s > 0:
            return LONG_RANGE_POSITIVE
        if self.s == 0:
            return LOG_CASE
        return NEGATIVE


def potential(s, r):
    """Vectorised V_s(r) for r > 0 (no validation)."""
    r = np.asarray(r, dtype=float)
    if s > 0:
        return r ** (-s)
    if s == 0:
        return -np.log(r)
    return -(r ** (-s))


def potential_derivative(s, r):
    """dV_s/dr for r > 0."""
    r = np.asarray(r, dtype=float)
    if s == 0:
        return -1.0 / r
    return -abs(s) * r ** (-s - 1.0)


def potential_value(exp: RieszExponent, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise SingularityError("potential singular at zero separation")
    out = potential(exp.s, r_arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True, eq=False)
class Domain:
    """Geometry carrier: interval, box, ball or periodic cell.

    Use the constructors :meth:`interval`, :meth:`box`, :meth:`ball` and
    :meth:`periodic` rather than the raw dataclass.
    """

    kind: str
    dim: int
    lower: tuple = ()
    upper: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    lattice: object = None
    scale: float = 1.0

    @classmethod
    def interval(cls, a, b):
        if not b > a:
            raise RieszError(f"empty interval [{a}, {b}]")
        return cls("interval", 1, lower=(float(a),), upper=(float(b),))

    @classmethod
    def box(cls, lower, upper):
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        if len(lower) != len(upper) or any(u <= l for l, u in zip(lower, upper)):
            raise RieszError("box needs lower < upper in every coordinate")
        if len(lower) == 1:
            return cls.interval(lower[0], upper[0])
        return cls("box", len(lower), lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius):
        center = tuple(float(v) for v in np.atleast_1d(center))
        if not radius > 0:
            raise RieszError("ball radius must be positive")
        if len(center) == 1:
            return cls.interval(center[0] - radius, center[0] + radius)
        return cls("ball", len(center), center=center, radius=float(radius))

    @classmethod
    def periodic(cls, lattice, ell=1.0):
        if not ell > 0:
            raise RieszError("cell scale must be positive")
        return cls("periodic", lattice.dim, lattice=lattice.scaled(ell), scale=float(ell))

    @property
    def is_periodic(self) -> bool:
        return self.kind == "periodic"

    @property
    def volume(self) -> float:
        if self.kind in ("interval", "box"):
            return float(np.prod(np.subtract(self.upper, self.lower)))
        if self.kind == "ball":
            return unit_ball_volume(self.dim) * self.radius**self.dim
        return self.lattice.covolume

    def bounding_box(self):
        if self.kind in ("interval", "box"):
            return np.array(self.lower), np.array(self.upper)
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        corners = np.array(np.meshgrid(*[[0.0, 1.0]] * self.dim, indexing="ij")).reshape(self.dim, -1)
        pts = self.lattice.basis @ corners
        return pts.min(axis=1), pts.max(axis=1)

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind in ("interval", "box"):
            lo, hi = np.array(self.lower), np.array(self.upper)
            return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
        if self.kind == "ball":
            return np.linalg.norm(pts - np.array(self.center), axis=1) <= self.radius * (1 + tol) + tol
        return np.ones(len(pts), dtype=bool)

    def project(self, points):
        """Nearest point of the closed domain (periodic: cell reduction)."""
        pts = np.array(points, dtype=float, ndmin=2)
        if self.kind in ("interval", "box"):
            return np.clip(pts, self.lower, self.upper)
        if self.kind == "ball":
            c = np.array(self.center)
            v = pts - c
            n = np.linalg.norm(v, axis=1)
            over = n > self.radius
            v[over] *= (self.radius / n[over])[:, None]
            return c + v
        return self.reduce(pts)

    def reduce(self, points):
        """Map periodic coordinates to the cell: fractional coordinates in [0, 1)^d."""
        if not self.is_periodic:
            return np.array(points, dtype=float, ndmin=2)
        pts = np.array(points, dtype=float, ndmin=2)
        frac = pts @ self.lattice.inverse.T
        frac -= np.floor(frac)
        frac[frac >= 1.0] = 0.0
        return frac @ self.lattice.basis.T

    def min_image(self, delta):
        """Shortest representative of displacement vectors modulo the cell lattice."""
        return self.lattice.min_image(delta)

    def scaled(self, lam):
        if not lam > 0:
            raise RieszError("scale factor must be positive")
        if self.kind == "interval":
            return Domain.interval(self.lower[0] * lam, self.upper[0] * lam)
        if self.kind == "box":
            return Domain.box(np.multiply(self.lower, lam), np.multiply(self.upper, lam))
        if self.kind == "ball":
            return Domain.ball(np.multiply(self.center, lam), self.radius * lam)
        return Domain("periodic", self.dim, lattice=self.lattice.scaled(lam), scale=self.scale * lam)

    def translated(self, shift):
        shift = np.atleast_1d(np.asarray(shift, dtype=float))
        if self.kind in ("interval", "box"):
            return Domain.box(np.add(self.lower, shift), np.add(self.upper, shift))
        if self.kind == "ball":
            return Domain.ball(np.add(self.center, shift), self.radius)
        return self

    def sample_uniform(self, rng, n):
        lo, hi = self.bounding_box()
        if self.is_periodic:
            frac = rng.random((n, self.dim))
            return frac @ self.lattice.basis.T
        out = np.empty((0, self.dim))
        while len(out) < n:
            cand = lo + (hi - lo) * rng.random((max(2 * (n - len(out)), 8), self.dim))
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:n]

    def __repr__(self):
        if self.kind in ("interval", "box"):
            return f"Domain.{self.kind}({list(self.lower)}, {list(self.upper)})"
        if self.kind == "ball":
            return f"Domain.ball({list(self.center)}, {self.radius})"
        return f"Domain.periodic(d={self.dim}, covolume={self.volume:.6g})"


def unit_ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def unit_sphere_area(d):
    """|S^{d-1}|, e.g. 2 for d=1, 2*pi for d=2, 4*pi for d=3."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


# ---------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    coordinates: np.ndarray
    domain: Domain | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        dim = self.domain.dim if self.domain is not None else None
        coords = np.array(self.coordinates, dtype=float)  # own copy; frozen below
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1) if dim in (None, 1) else coords.reshape(-1, dim)
        if coords.size == 0:
            coords = coords.reshape(0, dim or 1)
        if self.domain is not None:
            if coords.shape[1] != dim:
                raise RieszError(f"coordinates have dimension {coords.shape[1]}, domain has {dim}")
            if self.domain.is_periodic:
                coords = self.domain.reduce(coords)
            elif self.validate and len(coords) and not np.all(self.domain.contains(coords, tol=1e-9)):
                raise RieszError("configuration has points outside the domain")
        coords.setflags(write=False)
        object.__setattr__(self, "coordinates", coords)
        if self.validate and len(coords) > 1:
            if self.domain is not None and self.domain.is_periodic:
                d = np.linalg.norm(self.domain.min_image(_pair_differences(coords)), axis=1)
            else:
                d = pdist(coords)
            if np.any(d <= 0):
                raise SingularityError("configuration has coincident points")

    @property
    def n(self) -> int:
        return len(self.coordinates)

    @property
    def dim(self) -> int:
        return self.coordinates.shape[1]

    def __len__(self):
        return self.n


def _pair_differences(x):
    i, j = np.triu_indices(len(x), k=1)
    return x[i] - x[j]


def pair_indices(n):
    return np.triu_indices(n, k=1)


def riesz_energy(config: PointConfiguration, exp: RieszExponent) -> float:
    """Sum of V_s over all unordered pairs, using free-space distances."""
    x = config.coordinates if isinstance(config, PointConfiguration) else np.atleast_2d(config)
    if len(x) < 2:
        return 0.0
    r = pdist(x)
    if np.any(r <= 0):
        raise SingularityError("potential singular at zero separation")
    # fsum makes the result independent of the pair order
    return math.fsum(potential(exp.s, r))


def riesz_energy_gradient(x, s):
    """Gradient of the free-space pair energy with respect to the (N, d) positions."""
    x = np.atleast_2d(x)
    diff = x[:, None, :] - x[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(r, 1.0)
    coef = potential_derivative(s, r) / r
    np.fill_diagonal(coef, 0.0)
    return np.einsum("ij,ijk->ik", coef, diff)


def scale_configuration(config: PointConfiguration, lam: float) -> PointConfiguration:
    if not lam > 0:
        raise RieszError("scale factor must be positive")
    if lam == 1:
        return config
    domain = config.domain.scaled(lam) if config.domain is not None else None
    return PointConfiguration(config.coordinates * lam, domain)
