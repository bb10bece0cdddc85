"""Jellium energies: point/background and background/background terms.

Singular integrals of V_s over boxes and balls are reduced to smooth ones by
integrating the radial direction analytically.  With

    G(rho) = int_0^rho r^{d-1} V_s(r) dr,

the integral of V_s(|y|) over a pyramid with apex at the origin and flat
base F at height h equals h * int_F G(|p|) / |p|^d dp, and over a star-shaped
domain around the origin it is int_{S^{d-1}} G(rho(w)) dw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import integrate

from .core import (
    Domain,
    PointConfiguration,
    RieszExponent,
    potential,
    riesz_energy,
    riesz_energy_gradient,
    unit_ball_volume,
    unit_sphere_area,
)
from .errors import NeutralityError, RieszError
from .lattice import Lattice, periodic_potential
from .quadrature import (
    DEFAULT_QUADRATURE,
    QuadratureSettings,
    gauss_legendre,
    graded_breaks,
    panel_rule,
    refine,
)

NEUTRALITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JelliumSystem:
    domain: Domain
    rho_b: float
    exp: RieszExponent

    def __post_init__(self):
        if not self.rho_b > 0:
            raise RieszError("background density must be positive")
        if self.domain.is_periodic:
            raise RieszError("use periodic_energy for periodic cells")
        if self.exp.d != self.domain.dim:
            raise RieszError("exponent dimension does not match the domain")
        if not self.exp.s < self.exp.d:
            raise RieszError("Jellium needs s < d (background interaction must be integrable)")

    @property
    def s(self):
        return self.exp.s

    @property
    def neutral_n(self) -> float:
        return self.rho_b * self.domain.volume

    def check_neutral(self, n):
        if self.s <= 0 and abs(n - self.neutral_n) >= NEUTRALITY_TOL:
            raise NeutralityError(
                f"s <= 0 requires N = rho_b |Omega| = {self.neutral_n!r}, got N = {n}"
            )


def _sign(s):
    return 1.0 if s > 0 else -1.0


def radial_primitive(s, d, rho):
    """G(rho) = int_0^rho r^{d-1} V_s(r) dr (s < d)."""
    rho = np.asarray(rho, dtype=float)
    if s == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = rho**d * (1.0 / d**2 - np.log(rho) / d)
        return np.where(rho > 0, out, 0.0)
    return _sign(s) * rho ** (d - s) / (d - s)


# ---------------------------------------------------------------------------
# point-background potential


def _half_line_primitive(s, e):
    """F(e) = sign(e) int_0^|e| V_s(t) dt."""
    e = np.asarray(e, dtype=float)
    t = np.abs(e)
    if s == 0:
        safe = np.where(t > 0, t, 1.0)
        val = np.where(t > 0, -(t * np.log(safe) - t), 0.0)
    else:
        val = _sign(s) * t ** (1 - s) / (1 - s)
    return np.sign(e) * val


def _interval_potential(s, a, b, x):
    return _half_line_primitive(s, b - x) - _half_line_primitive(s, a - x)


def _interval_potential_gradient(s, a, b, x):
    return potential(s, x - a) - potential(s, b - x)


def _corner_box(s, d, c, order):
    """int over [0, c_1] x ... x [0, c_d] of V_s(|y|) dy via pyramids."""
    total = 0.0
    for i in range(d):
        h = c[i]
        others = [c[j] for j in range(d) if j != i]
        if h <= 0 or any(e <= 0 for e in others):
            continue
        rules = [panel_rule(graded_breaks(e, h), order) for e in others]
        if d == 2:
            (q, w), = rules
            p2 = h * h + q * q
        else:
            (q1, w1), (q2, w2) = rules
            p2 = h * h + q1[:, None] ** 2 + q2[None, :] ** 2
            w = w1[:, None] * w2[None, :]
        pn = np.sqrt(p2)
        total += h * np.sum(w * radial_primitive(s, d, pn) / pn**d)
    return total


def _box_potential(s, lower, upper, x, quad):
    d = len(x)
    # int_a^b f(|t|) dt = F(b) - F(a) with F(e) = sign(e) int_0^|e| f, applied per axis
    terms = []
    for choice in product((0, 1), repeat=d):
        ends = np.where(np.array(choice) == 1, upper - x, lower - x)
        sign = np.prod(np.where(np.array(choice) == 1, 1.0, -1.0) * np.sign(ends))
        if sign != 0:
            terms.append((sign, np.abs(ends)))

    def evaluate(order):
        return sum(sg * _corner_box(s, d, c, order) for sg, c in terms)

    return refine(evaluate, quad, start_order=max(8, quad.nodes_per_axis // 8))


def _ball_potential(s, center, radius, x, quad):
    d = len(x)
    u = float(np.linalg.norm(x - center))
    R = radius
    if u < 1e-15 * R:
        return unit_sphere_area(d) * float(radial_primitive(s, d, R))
    eps = max(math.sqrt(max(R * R - u * u, 0.0)) / u, 1e-14)

    if d == 2:
        def rho(theta):
            c = np.cos(theta)
            return -u * c + np.sqrt(np.maximum(u * u * c * c + R * R - u * u, 0.0))

        half = math.pi / 2
        br = np.unique(np.concatenate([half - graded_breaks(half, eps)[::-1], half + graded_breaks(half, eps)]))

        def evaluate(order):
            t, w = panel_rule(br, order)
            return 2.0 * np.sum(w * radial_primitive(s, d, rho(t)))
    else:
        def rho(mu):
            return -u * mu + np.sqrt(np.maximum(u * u * mu * mu + R * R - u * u, 0.0))

        br = np.unique(np.concatenate([-graded_breaks(1.0, eps)[::-1], graded_breaks(1.0, eps)]))

        def evaluate(order):
            t, w = panel_rule(br, order)
            return 2.0 * math.pi * np.sum(w * radial_primitive(s, d, rho(t)))

    return refine(evaluate, quad, start_order=max(8, quad.nodes_per_axis // 8))


def _domain_potential(s, domain: Domain, x, quad):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if domain.kind == "interval":
        return float(_interval_potential(s, domain.lower[0], domain.upper[0], x[0]))
    if domain.kind == "box":
        return _box_potential(s, np.array(domain.lower), np.array(domain.upper), x, quad)
    if domain.kind == "ball":
        return _ball_potential(s, np.array(domain.center), domain.radius, x, quad)
    raise RieszError(f"background potential not available for {domain.kind}")


def background_potential(sys: JelliumSystem, x, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """int_Omega V_s(x - y) dy for x in the closed domain."""
    if not sys.domain.contains(np.atleast_1d(x), tol=1e-9)[0]:
        raise RieszError("background potential requested outside the closed domain")
    return _domain_potential(sys.s, sys.domain, x, q)


def _face_integral(s, h, extents, order):
    """int over the union of corner rectangles [0, e]^m of V_s(sqrt(h^2 + |q|^2)) dq."""
    total = 0.0
    scale = max(h, 1e-12 * max(max(ex) for ex in extents))
    for ext in extents:
        if any(e <= 0 for e in ext):
            continue
        rules = [panel_rule(graded_breaks(e, scale), order) for e in ext]
        if len(rules) == 1:
            (q, w), = rules
            r2 = h * h + q * q
        else:
            (q1, w1), (q2, w2) = rules
            r2 = h * h + q1[:, None] ** 2 + q2[None, :] ** 2
            w = w1[:, None] * w2[None, :]
        total += np.sum(w * potential(s, np.sqrt(r2)))
    return total


def _box_gradient(s, lower, upper, x, quad):
    d = len(x)
    grad = np.zeros(d)
    for i in range(d):
        others = [j for j in range(d) if j != i]
        extents = [list(e) for e in product(*[(x[j] - lower[j], upper[j] - x[j]) for j in others])]

        def evaluate(order, i=i, extents=extents):
            return (_face_integral(s, x[i] - lower[i], extents, order)
                    - _face_integral(s, upper[i] - x[i], extents, order))

        scale = abs(_face_integral(s, x[i] - lower[i], extents, 8)) + abs(_face_integral(s, upper[i] - x[i], extents, 8))
        grad[i] = refine(evaluate, quad, start_order=8, scale=scale)
    return grad


def _ball_gradient(s, center, R, x, quad):
    d = len(x)
    v = x - center
    u = float(np.linalg.norm(v))
    if u < 1e-15 * R:
        return np.zeros(d)
    e = v / u
    eps = max(abs(R - u) / R, 1e-14)
    if d == 2:
        br = graded_breaks(math.pi, eps)

        def evaluate(order):
            t, w = panel_rule(br, order)
            r = np.sqrt(np.maximum(u * u + R * R - 2 * u * R * np.cos(t), 1e-300))
            return -2.0 * R * np.sum(w * potential(s, r) * np.cos(t))
    else:
        br = 1.0 - graded_breaks(2.0, eps)[::-1]

        def evaluate(order):
            mu, w = panel_rule(br, order)
            r = np.sqrt(np.maximum(u * u + R * R - 2 * u * R * mu, 1e-300))
            return -2.0 * math.pi * R * R * np.sum(w * potential(s, r) * mu)

    return refine(evaluate, quad, start_order=8) * e


def background_potential_gradient(sys: JelliumSystem, x, q: QuadratureSettings = DEFAULT_QUADRATURE):
    """Gradient of the background potential: -int_{boundary} V_s(x - y) n(y) dS."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dom = sys.domain
    if dom.kind == "interval":
        return np.atleast_1d(_interval_potential_gradient(sys.s, dom.lower[0], dom.upper[0], x[0]))
    if dom.kind == "box":
        return _box_gradient(sys.s, np.array(dom.lower), np.array(dom.upper), x, q)
    return _ball_gradient(sys.s, np.array(dom.center), dom.radius, x, q)


# ---------------------------------------------------------------------------
# background self-energy


def _interval_pair_integral(s, length):
    L = length
    if s == 0:
        return -(L * L * math.log(L)) + 1.5 * L * L
    return _sign(s) * 2.0 * L ** (2 - s) / ((1 - s) * (2 - s))


def _box_pair_integral(s, sides, order):
    """int_{B x B} V_s(x - y) = 2^d int_{[0,c]^d} prod(c_j - u_j) V_s(|u|) du, via pyramids."""
    c = np.asarray(sides, dtype=float)
    d = len(c)
    total = 0.0
    for i in range(d):
        others = [j for j in range(d) if j != i]
        rules = [panel_rule(graded_breaks(c[j], c[i]), order) for j in others]
        if d == 2:
            (q, w), = rules
            pj = [q]
            pn = np.sqrt(c[i] ** 2 + q * q)
        else:
            (q1, w1), (q2, w2) = rules
            Q1, Q2 = np.meshgrid(q1, q2, indexing="ij")
            pj = [Q1.ravel(), Q2.ravel()]
            w = (w1[:, None] * w2[None, :]).ravel()
            pn = np.sqrt(c[i] ** 2 + pj[0] ** 2 + pj[1] ** 2)
        # polynomial in t: (c_i - t c_i) * prod_j (c_j - t p_j); coefficients per node
        coeffs = np.zeros((len(pn), d + 1))
        coeffs[:, 0] = c[i]
        coeffs[:, 1] = -c[i]
        deg = 1
        for jj, j in enumerate(others):
            new = np.zeros_like(coeffs)
            new[:, : deg + 1] += c[j] * coeffs[:, : deg + 1]
            new[:, 1 : deg + 2] -= pj[jj][:, None] * coeffs[:, : deg + 1]
            coeffs = new
            deg += 1
        m = np.arange(d + 1)
        if s == 0:
            radial = coeffs * (1.0 / (d + m) ** 2 - np.log(pn)[:, None] / (d + m))
        else:
            radial = _sign(s) * coeffs * (pn[:, None] ** (-s)) / (d + m - s)
        total += c[i] * np.sum(w * radial.sum(axis=1))
    return 2**d * total


def _ball_overlap(d, R, r):
    if d == 2:
        x = np.clip(r / (2 * R), 0.0, 1.0)
        return 2 * R * R * np.arccos(x) - 0.5 * r * np.sqrt(np.maximum(4 * R * R - r * r, 0.0))
    return math.pi / 12.0 * (4 * R + r) * (2 * R - r) ** 2


def _ball_pair_integral(s, d, R):
    area = unit_sphere_area(d)

    def f(r):
        return area * float(_ball_overlap(d, R, r))

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    if s == 0:
        val_log, _ = integrate.quad(f, 0.0, 2 * R, weight="alg-loga", wvar=(d - 1, 0), **opts)
        return -val_log
    val, _ = integrate.quad(f, 0.0, 2 * R, weight="alg", wvar=(d - 1 - s, 0), **opts)
    return _sign(s) * val


def background_pair_integral(s, domain: Domain, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """int_{Omega x Omega} V_s(x - y) dx dy."""
    if domain.kind == "interval":
        return _interval_pair_integral(s, domain.upper[0] - domain.lower[0])
    if domain.kind == "box":
        sides = np.subtract(domain.upper, domain.lower)
        return refine(lambda order: _box_pair_integral(s, sides, order), q,
                      start_order=max(8, q.nodes_per_axis // 8))
    if domain.kind == "ball":
        return _ball_pair_integral(s, domain.dim, domain.radius)
    raise RieszError(f"self-energy not available for {domain.kind}")


def background_self_energy(sys: JelliumSystem, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    return 0.5 * sys.rho_b**2 * background_pair_integral(sys.s, sys.domain, q)


# ---------------------------------------------------------------------------
# energies


def jellium_energy(sys: JelliumSystem, config: PointConfiguration, q: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    x = config.coordinates
    sys.check_neutral(len(x))
    if len(x) and not np.all(sys.domain.contains(x, tol=1e-9)):
        raise RieszError("configuration has points outside the domain")
    pairs = riesz_energy(config, sys.exp)
    bg = math.fsum(_domain_potential(sys.s, sys.domain, xi, q) for xi in x)
    return pairs - sys.rho_b * bg + background_self_energy(sys, q)


def jellium_energy_gradient(sys: JelliumSystem, x, q: QuadratureSettings = DEFAULT_QUADRATURE):
    x = np.atleast_2d(x)
    grad = riesz_energy_gradient(x, sys.s)
    for j, xj in enumerate(x):
        grad[j] -= sys.rho_b * background_potential_gradient(sys, xj, q)
    return grad


def jellium_energy_1d_coulomb(config, n: int | None = None) -> float:
    """Closed form of the s = -1 Jellium energy on [-N/2, N/2] at unit background.

    sum_j (x_j - j + (N+1)/2)^2 + N/12 with the points sorted ascending (j = 1..N).
    """
    x = np.sort(np.asarray(getattr(config, "coordinates", config), dtype=float).ravel())
    n = len(x) if n is None else n
    if len(x) != n:
        raise RieszError(f"expected {n} points, got {len(x)}")
    dom = getattr(config, "domain", None)
    if dom is not None and not (
        dom.kind == "interval" and math.isclose(dom.lower[0], -n / 2) and math.isclose(dom.upper[0], n / 2)
    ):
        raise RieszError(f"closed form needs the domain [-N/2, N/2] = [{-n / 2}, {n / 2}]")
    if np.any(np.abs(x) > n / 2 + 1e-12):
        raise RieszError("points outside [-N/2, N/2]")
    j = np.arange(1, n + 1)
    return math.fsum((x - j + (n + 1) / 2) ** 2) + n / 12.0


# ---------------------------------------------------------------------------
# discrepancy


def _interval_overlap(a, b, c, e):
    return max(0.0, min(b, e) - max(a, c))


def _disk_rect_area(cx, cy, r, lo, hi):
    """Area of the disk B_r((cx, cy)) intersected with the rectangle [lo, hi]."""
    a = max(cx - r, lo[0])
    b = min(cx + r, hi[0])
    if b <= a:
        return 0.0

    def chord(t):
        h = math.sqrt(max(r * r - (t - cx) ** 2, 0.0))
        return _interval_overlap(cy - h, cy + h, lo[1], hi[1])

    pts = [p for p in (cx, lo[1], hi[1]) if a < p < b]
    for yb in (lo[1], hi[1]):
        dy = yb - cy
        if abs(dy) < r:
            w = math.sqrt(r * r - dy * dy)
            pts += [p for p in (cx - w, cx + w) if a < p < b]
    val, _ = integrate.quad(chord, a, b, points=sorted(set(pts)) or None, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def ball_domain_overlap(tau, r, domain: Domain) -> float:
    """|B_r(tau) intersected with the domain|."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    d = domain.dim
    if domain.is_periodic:
        return unit_ball_volume(d) * r**d
    if domain.kind == "interval":
        return _interval_overlap(tau[0] - r, tau[0] + r, domain.lower[0], domain.upper[0])
    if domain.kind == "ball":
        dist = float(np.linalg.norm(tau - np.array(domain.center)))
        return _ball_ball_overlap(d, r, domain.radius, dist)
    lo, hi = np.array(domain.lower), np.array(domain.upper)
    if d == 2:
        return _disk_rect_area(tau[0], tau[1], r, lo, hi)

    def slab(z):
        h = math.sqrt(max(r * r - (z - tau[2]) ** 2, 0.0))
        return _disk_rect_area(tau[0], tau[1], h, lo[:2], hi[:2]) if h > 0 else 0.0

    a, b = max(tau[2] - r, lo[2]), min(tau[2] + r, hi[2])
    if b <= a:
        return 0.0
    val, _ = integrate.quad(slab, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
    return val


def _ball_ball_overlap(d, r1, r2, dist):
    if dist >= r1 + r2:
        return 0.0
    if dist <= abs(r1 - r2):
        return unit_ball_volume(d) * min(r1, r2) ** d
    if d == 2:
        a1 = r1 * r1 * math.acos((dist * dist + r1 * r1 - r2 * r2) / (2 * dist * r1))
        a2 = r2 * r2 * math.acos((dist * dist + r2 * r2 - r1 * r1) / (2 * dist * r2))
        tri = 0.5 * math.sqrt((-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2))
        return a1 + a2 - tri
    return (math.pi * (r1 + r2 - dist) ** 2
            * (dist * dist + 2 * dist * (r1 + r2) - 3 * (r1 - r2) ** 2) / (12 * dist))


def discrepancy(config, tau, r: float, rho_b: float, domain: Domain) -> float:
    """(#X in B_r(tau) - rho_b |B_r(tau) cap Omega|) / |B_r|."""
    if not r > 0:
        raise RieszError("radius must be positive")
    x = np.asarray(getattr(config, "coordinates", config), dtype=float).reshape(-1, domain.dim)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if domain.is_periodic:
        if len(x):
            z, _ = domain.lattice.vectors(r + np.abs(domain.bounding_box()[1] - domain.bounding_box()[0]).sum()
                                          + np.linalg.norm(tau), include_zero=True)
            dist = np.linalg.norm(x[:, None, :] + z[None, :, :] - tau, axis=2)
            count = int(np.sum(dist < r))
        else:
            count = 0
    else:
        count = int(np.sum(np.linalg.norm(x - tau, axis=1) < r)) if len(x) else 0
    vol = unit_ball_volume(domain.dim) * r**domain.dim
    return (count - rho_b * ball_domain_overlap(tau, r, domain)) / vol


# ---------------------------------------------------------------------------
# sharp background truncation


def _cell_integrals_far(s, x, centers, half, order):
    """Tensor Gauss-Legendre integral of V_s(x - y) over boxes centre +/- half."""
    d = len(x)
    rules = [gauss_legendre(-h, h, order) for h in half]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    out = np.empty(len(centers))
    chunk = max(1, 2_000_000 // len(nodes))
    for start in range(0, len(centers), chunk):
        c = centers[start : start + chunk]
        y = c[:, None, :] + nodes[None, :, :]
        r = np.linalg.norm(x - y, axis=2)
        out[start : start + chunk] = potential(s, r) @ weights
    return out


def sharp_background_shift(lat: Lattice, s: float, x, R: float, q: QuadratureSettings = DEFAULT_QUADRATURE):
    """Truncated point-minus-sharp-background potential and its predicted limit.

    The background fills the union of the Wigner-Seitz cells whose centres lie
    in B_R.  Only rectangular lattices (box-shaped cells) are supported.
    Returns (truncated_value, predicted_limit).
    """
    d = lat.dim
    basis = lat.basis
    if not np.allclose(basis, np.diag(np.diag(basis)), atol=1e-14):
        raise RieszError("sharp background truncation needs a rectangular lattice (box-shaped cells)")
    if not d - 2 <= s < d:
        raise RieszError(f"need d-2 <= s < d, got s={s}, d={d}")
    sides = np.abs(np.diag(basis))
    if s == d - 2 and d > 1 and not np.allclose(sides, sides[0]):
        raise RieszError("s = d-2 needs a quadrupole-free (cubic) cell")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cov = lat.covolume
    rho_b = 1.0 / cov
    z, rz = lat.vectors(R, include_zero=True)
    dist = np.linalg.norm(z - x, axis=1)
    if np.any(dist < 1e-10):
        raise RieszError("x coincides with a lattice point")
    points = math.fsum(potential(s, dist))
    half = sides / 2.0
    diam = float(np.linalg.norm(sides))
    near = dist < 2.0 * diam
    mid = (dist >= 2.0 * diam) & (dist < 6.0 * diam)
    far = dist >= 6.0 * diam
    bg = 0.0
    for c in z[near]:
        if d == 1:
            bg += float(_interval_potential(s, c[0] - half[0], c[0] + half[0], x[0]))
        else:
            bg += _box_potential(s, c - half, c + half, x, q)
    if mid.any():
        bg += math.fsum(_cell_integrals_far(s, x, z[mid], half, 10))
    if far.any():
        bg += math.fsum(_cell_integrals_far(s, x, z[far], half, 5))
    truncated = points - rho_b * bg
    second_moment = cov * float(np.sum(sides**2)) / 12.0  # int_Q |y|^2 dy for a box
    shift = 0.0
    if s == d - 2:
        shift += unit_sphere_area(d) / (2 * d) * second_moment
    if s == 0:
        shift += math.log(cov) / (d * cov)
    return truncated, periodic_potential(lat, s, x) + shift
