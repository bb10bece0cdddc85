"""Lattices, Epstein zeta functions and periodic Riesz potentials.

Every continued quantity is evaluated through the theta-function split at
t0 = alpha / |Q|^{2/d}::

    pi^{-s/2} Gamma(s/2) 2 zeta_L(s)
        = -2 t0^{s/2}/s - 2 t0^{(s-d)/2} / (|Q| (d-s))
          + sum'_{z in L}  (pi|z|^2)^{-s/2}     Gamma(s/2,     pi t0 |z|^2)
          + |Q|^{-1} sum'_{k in L°} (pi|k|^2)^{-(d-s)/2} Gamma((d-s)/2, pi |k|^2 / t0)

with L° the integer-pairing dual.  The x-dependent analogue (all z, phase
cos(2 pi k.x) on the dual sum, no -2 t0^{s/2}/s term) gives the zero-mean
periodic potential for s < d and the plain image sum for s > d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
from scipy import special

from .core import potential, unit_sphere_area
from .errors import PoleError, RieszError, SingularityError
from .special import upper_gamma

POLE_WIDTH = 1e-6
_EULER_GAMMA = float(np.euler_gamma)


@dataclass(frozen=True, eq=False)
class Lattice:
    """Bravais lattice; the columns of ``basis`` are the generators v_1..v_d."""

    basis: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        b = np.array(self.basis, dtype=float, ndmin=2)
        if b.shape[0] != b.shape[1]:
            raise RieszError("basis must be a square matrix")
        if b.shape[0] > 3:
            raise RieszError("only dimensions d <= 3 are supported")
        if abs(np.linalg.det(b)) <= 1e-14 * max(1.0, np.abs(b).max()) ** b.shape[0]:
            raise RieszError("basis is singular")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def covolume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @property
    def density(self) -> float:
        return 1.0 / self.covolume

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @cached_property
    def dual_basis(self) -> np.ndarray:
        """Columns k_i with k_i . v_j = delta_ij (the 2*pi-free dual)."""
        return self.inverse.T.copy()

    def dual(self) -> "Lattice":
        return Lattice(self.dual_basis, name=f"dual({self.name})")

    def scaled(self, ell) -> "Lattice":
        return Lattice(self.basis * float(ell), name=self.name)

    def vectors(self, radius, include_zero=False):
        """All lattice vectors of norm <= radius, sorted by norm."""
        bound = np.ceil(radius * np.linalg.norm(self.inverse, axis=1)).astype(int)
        grids = np.meshgrid(*[np.arange(-m, m + 1) for m in bound], indexing="ij")
        n = np.stack([g.ravel() for g in grids], axis=1)
        v = n @ self.basis.T
        r = np.linalg.norm(v, axis=1)
        keep = r <= radius
        if not include_zero:
            keep &= r > 0
        v, r = v[keep], r[keep]
        order = np.argsort(r, kind="stable")
        return v[order], r[order]

    def shortest_vector_length(self) -> float:
        radius = np.abs(self.basis).sum(axis=0).max() + 1e-12
        radius = min(radius, np.linalg.norm(self.basis, axis=0).min() * (1 + 1e-12))
        _, r = self.vectors(radius)
        return float(r[0])

    def min_image(self, delta):
        """Shortest representative of each displacement modulo the lattice."""
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        frac = delta @ self.inverse.T
        frac -= np.round(frac)
        base = frac @ self.basis.T
        shifts = np.array(list(product((-1, 0, 1), repeat=self.dim)), dtype=float) @ self.basis.T
        cand = base[:, None, :] + shifts[None, :, :]
        idx = np.argmin(np.einsum("mkd,mkd->mk", cand, cand), axis=1)
        return cand[np.arange(len(cand)), idx]

    def to_text(self) -> str:
        lines = [f"dimension {self.dim}"]
        for col in self.basis.T:
            lines.append("basis " + " ".join(repr(float(v)) for v in col))
        lines.append(f"density {self.density!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Lattice":
        dim, rows, density = None, [], None
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *vals = line.split()
            if key == "dimension":
                dim = int(vals[0])
            elif key == "basis":
                rows.append([float(v) for v in vals])
            elif key == "density":
                density = float(vals[0])
            else:
                raise RieszError(f"unknown lattice key: {key}")
        if dim is None or len(rows) != dim or any(len(r) != dim for r in rows):
            raise RieszError("lattice text needs 'dimension d' and d 'basis' rows of length d")
        lat = cls(np.array(rows).T)
        if density is not None and not math.isclose(lat.density, density, rel_tol=1e-9):
            raise RieszError(f"density {density} inconsistent with basis (1/covolume = {lat.density})")
        return lat


_CATALOG_DIM = {"integers": 1, "square": 2, "triangular": 2, "cubic": 3, "bcc": 3, "fcc": 3}


def lattice_catalog(name: str, density: float = 1.0) -> Lattice:
    """Named lattice rescaled to one point per cell at the given density."""
    if name not in _CATALOG_DIM:
        raise RieszError(f"unknown lattice: {name} (choose from {', '.join(_CATALOG_DIM)})")
    if not density > 0:
        raise RieszError("density must be positive")
    if name == "integers":
        b = np.array([[1.0]])
    elif name == "square":
        b = np.eye(2)
    elif name == "triangular":
        b = np.array([[1.0, 0.5], [0.0, math.sqrt(3) / 2]])
    elif name == "cubic":
        b = np.eye(3)
    elif name == "bcc":
        b = 0.5 * np.array([[-1.0, 1, 1], [1, -1, 1], [1, 1, -1]])
    else:
        b = 0.5 * np.array([[0.0, 1, 1], [1, 0, 1], [1, 1, 0]])
    d = b.shape[0]
    b = b * (1.0 / (density * abs(np.linalg.det(b)))) ** (1.0 / d)
    return Lattice(b, name=name)


# ---------------------------------------------------------------------------
# Ewald machinery


@dataclass(frozen=True)
class EwaldSettings:
    alpha: float = 1.0
    tolerance: float = 1e-12
    real_cutoff: int | None = None
    fourier_cutoff: int | None = None

    def __post_init__(self):
        if not 0.25 <= self.alpha <= 4:
            raise RieszError(f"alpha must lie in [0.25, 4], got {self.alpha}")
        if not self.tolerance > 0:
            raise RieszError("tolerance must be positive")


DEFAULT_EWALD = EwaldSettings()


def _split_point(lat, settings):
    return settings.alpha / lat.covolume ** (2.0 / lat.dim)


def _real_term(a, t0, r2):
    """(pi r^2)^{-a} Gamma(a, pi t0 r^2) = int_{t0}^inf t^{a-1} e^{-pi t r^2} dt."""
    u = math.pi * r2
    return u ** (-a) * upper_gamma(a, t0 * u)


def _recip_term(b, t0, k2):
    u = math.pi * k2
    return u ** (-b) * upper_gamma(b, u / t0)


def _radius_for(lat, term, scale, tol, fixed, spacing):
    """Smallest radius whose outermost shell contributes below tol/10 (auto-grown)."""
    if fixed is not None:
        return fixed * spacing
    u = 30.0
    while True:
        radius = math.sqrt(u / (math.pi * scale))
        _, r = lat.vectors(radius)
        shell = r[r >= radius - spacing]
        if len(shell) and np.abs(term(shell**2)).sum() < tol / 10:
            return radius
        u += 10.0
        if u > 400:
            return radius


def _cutoffs(lat, a, b, t0, settings):
    spacing = lat.shortest_vector_length()
    dual = lat.dual()
    dspacing = dual.shortest_vector_length()
    r_real = _radius_for(lat, lambda r2: _real_term(a, t0, r2), t0, settings.tolerance,
                         settings.real_cutoff, spacing)
    r_rec = _radius_for(dual, lambda k2: _recip_term(b, t0, k2) / lat.covolume, 1.0 / t0,
                        settings.tolerance, settings.fourier_cutoff, dspacing)
    return r_real, r_rec, dual


def _check_pole(lat, s):
    if abs(s - lat.dim) < POLE_WIDTH:
        residue = unit_sphere_area(lat.dim) / lat.covolume
        raise PoleError(f"pole at s = d = {lat.dim}: residue of 2*zeta_L is {residue!r}", residue=residue)


def _zeta_bracket(lat, s, settings):
    """H(s) = bracket without the -2 t0^{s/2}/s term; also returns t0."""
    d, q = lat.dim, lat.covolume
    t0 = _split_point(lat, settings)
    a, b = s / 2.0, (d - s) / 2.0
    r_real, r_rec, dual = _cutoffs(lat, a, b, t0, settings)
    _, rz = lat.vectors(r_real)
    _, rk = dual.vectors(r_rec)
    if b == 0:
        const = 0.0
    else:
        const = -2.0 * t0 ** (-b) / (q * (d - s))
    real = math.fsum(_real_term(a, t0, rz**2))
    rec = math.fsum(_recip_term(b, t0, rk**2)) / q
    return const + real + rec, t0


def epstein_zeta(lat: Lattice, s: float, settings: EwaldSettings = DEFAULT_EWALD) -> float:
    """Continued zeta_L(s) = (1/2) sum'_{z in L} |z|^{-s}."""
    _check_pole(lat, s)
    if s == 0:
        return -0.5
    h, t0 = _zeta_bracket(lat, s, settings)
    bracket = -2.0 * t0 ** (s / 2) / s + h
    return 0.5 * math.pi ** (s / 2) * special.rgamma(s / 2) * bracket


def epstein_zeta_derivative0(lat: Lattice, settings: EwaldSettings = DEFAULT_EWALD) -> float:
    """d/ds zeta_L(s) at s = 0 from the differentiated theta split."""
    h0, t0 = _zeta_bracket(lat, 0.0, settings)
    return (h0 - math.log(t0) - _EULER_GAMMA - math.log(math.pi)) / 4.0


def zeta_pole_residue(lat: Lattice) -> float:
    """Residue of 2*zeta_L at s = d."""
    return unit_sphere_area(lat.dim) / lat.covolume


def madelung(lat: Lattice, s: float, settings: EwaldSettings = DEFAULT_EWALD) -> float:
    if s == 0:
        return 2.0 * epstein_zeta_derivative0(lat, settings)
    z = epstein_zeta(lat, s, settings)
    return 2.0 * z if s > 0 else -2.0 * z


def _phi_parts(lat, s, x, settings, gradient=False):
    """Bracket of the continued image sum Phi(s, x) and optionally its x-gradient.

    Returns (bracket, grad_bracket) with shapes (m,) and (m, d); x is (m, d).
    """
    d, q = lat.dim, lat.covolume
    t0 = _split_point(lat, settings)
    a, b = s / 2.0, (d - s) / 2.0
    r_real, r_rec, dual = _cutoffs(lat, a, b, t0, settings)
    x = lat.min_image(x)
    xmax = np.linalg.norm(x, axis=1).max() if len(x) else 0.0
    z, _ = lat.vectors(r_real + xmax, include_zero=True)
    k, rk = dual.vectors(r_rec)
    y = x[:, None, :] - z[None, :, :]
    r2 = np.einsum("mzd,mzd->mz", y, y)
    if np.any(r2 <= 1e-20):
        raise SingularityError("periodic potential is singular on the lattice")
    shape = r2.shape
    flat = r2.ravel()
    real = _real_term(a, t0, flat).reshape(shape).sum(axis=1)
    coef = _recip_term(b, t0, rk**2) / q
    phase = 2.0 * math.pi * (x @ k.T)
    rec = np.cos(phase) @ coef
    const = 0.0 if b == 0 else -2.0 * t0 ** (-b) / (q * (d - s))
    bracket = const + real + rec
    if not gradient:
        return bracket, None
    u = math.pi * flat
    gterm = (-2.0 * math.pi * u ** (-a - 1.0) * upper_gamma(a + 1.0, t0 * u)).reshape(shape)
    g_real = np.einsum("mz,mzd->md", gterm, y)
    g_rec = -2.0 * math.pi * (np.sin(phase) * coef) @ k
    return bracket, g_real + g_rec


def _periodic(lat, s, x, settings, gradient):
    _check_pole(lat, s)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != lat.dim:
        x = x.reshape(-1, lat.dim)
    bracket, grad = _phi_parts(lat, s, x, settings, gradient)
    if s == 0:
        factor = 0.5
    else:
        factor = math.pi ** (s / 2) * special.rgamma(s / 2)
        if s < 0:
            factor = -factor
    val = factor * bracket
    return val, (factor * grad if gradient else None)


def periodic_potential(lat: Lattice, s: float, x, settings: EwaldSettings = DEFAULT_EWALD):
    """Periodic Riesz potential V_s^L(x).

    For s > d this is the image sum sum_z V_s(x - z); for s < d it is the
    zero-mean periodic function with the Fourier coefficients of V_s (sign
    flipped for s < 0 and the s-derivative at s = 0).  Accepts a single
    position or an (m, d) array.
    """
    x_arr = np.asarray(x, dtype=float)
    val, _ = _periodic(lat, s, x_arr, settings, gradient=False)
    if x_arr.ndim == 0 or (x_arr.ndim == 1 and lat.dim > 1) or (x_arr.ndim == 1 and x_arr.size == 1):
        return float(val[0])
    return val


def periodic_potential_gradient(lat: Lattice, s: float, x, settings: EwaldSettings = DEFAULT_EWALD):
    """Gradient of V_s^L at an (m, d) array of positions."""
    _, grad = _periodic(lat, s, x, settings, gradient=True)
    return grad


def periodic_energy(lat: Lattice, ell: float, s: float, points, settings: EwaldSettings = DEFAULT_EWALD) -> float:
    """Sum_{j<k} V_s^{ell L}(x_j - x_k) + N M_{ell L}(s) / 2."""
    big = lat.scaled(ell)
    x = _as_points(points, lat.dim)
    n = len(x)
    total = n * madelung(big, s, settings) / 2.0
    if n > 1:
        i, j = np.triu_indices(n, k=1)
        total += math.fsum(np.atleast_1d(periodic_potential(big, s, x[i] - x[j], settings)))
    return total


def periodic_energy_gradient(lat: Lattice, ell: float, s: float, points, settings: EwaldSettings = DEFAULT_EWALD):
    big = lat.scaled(ell)
    x = _as_points(points, lat.dim)
    n = len(x)
    grad = np.zeros_like(x)
    if n > 1:
        i, j = np.triu_indices(n, k=1)
        g = periodic_potential_gradient(big, s, x[i] - x[j], settings)
        np.add.at(grad, i, g)
        np.add.at(grad, j, -g)
    return grad


def _as_points(points, dim):
    x = getattr(points, "coordinates", points)
    return np.asarray(x, dtype=float).reshape(-1, dim)


def direct_image_sum(lat: Lattice, s: float, x, radius: float) -> float:
    """Truncated sum_z V_s(x - z) over |z| <= radius (only meaningful for s > d)."""
    x = np.asarray(x, dtype=float).reshape(lat.dim)
    z, _ = lat.vectors(radius, include_zero=True)
    return math.fsum(potential(s, np.linalg.norm(x - z, axis=1)))
