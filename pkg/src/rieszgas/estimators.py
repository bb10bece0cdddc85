"""Correlation, number-variance and sum-rule estimators for sample streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Domain, unit_sphere_area
from .errors import RieszError

N_BLOCKS = 16


@dataclass(frozen=True)
class CorrelationEstimate:
    bin_edges: np.ndarray
    rho1: float
    rho2: np.ndarray
    rho2T: np.ndarray
    standard_errors: np.ndarray
    dim: int = 1

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def shell_measure(self):
        """|S^{d-1}| int r^{d-1} dr over each bin (2 dr in one dimension)."""
        e = self.bin_edges
        return unit_sphere_area(self.dim) * (e[1:] ** self.dim - e[:-1] ** self.dim) / self.dim


def _coords(frame):
    return np.asarray(frame["coordinates"] if isinstance(frame, dict) else frame, dtype=float)


def _blocks(n_items, n_blocks=N_BLOCKS):
    if n_items < n_blocks:
        raise RieszError(f"need at least {n_blocks} samples for block averaging")
    return np.array_split(np.arange(n_items), n_blocks)


def _pair_distances(x, geometry: Domain):
    i, j = np.triu_indices(len(x), k=1)
    delta = x[i] - x[j]
    if geometry.is_periodic:
        delta = geometry.min_image(delta)
    return np.linalg.norm(delta, axis=1)


def _pair_volume(geometry: Domain, edges, rng):
    """int_Omega int_Omega 1(|x - y| in bin) dx dy for each bin (ordered pairs)."""
    vol = geometry.volume
    if geometry.is_periodic:
        # valid while the bins stay inside the inscribed ball of the cell
        e = edges
        return vol * unit_sphere_area(geometry.dim) * (e[1:] ** geometry.dim - e[:-1] ** geometry.dim) / geometry.dim
    if geometry.kind == "interval":
        L = vol
        e = np.clip(edges, 0, L)
        cdf = 1.0 - (1.0 - e / L) ** 2
        return L**2 * np.diff(cdf)
    # Monte Carlo covariogram for boxes and balls (fixed seed, deterministic)
    u = geometry.sample_uniform(rng, 400_000)
    v = geometry.sample_uniform(rng, 400_000)
    hist, _ = np.histogram(np.linalg.norm(u - v, axis=1), bins=edges)
    return vol**2 * hist / len(u)


def estimate_correlations(samples, bins, geometry: Domain, min_samples=100):
    """Radial pair correlation rho^(2)(r), normalised so an ideal (Poisson) gas gives rho2T = 0.

    rho1 is the mean density; bins whose pair volume vanishes are NaN.
    Standard errors come from 16 contiguous blocks of frames.
    """
    xs = [_coords(f) for f in samples]
    if len(xs) < min_samples:
        raise RieszError(f"need at least {min_samples} frames, got {len(xs)}")
    edges = np.asarray(bins, dtype=float)
    if edges.ndim == 0:
        raise RieszError("bins must be an array of edges")
    norm = _pair_volume(geometry, edges, np.random.default_rng(12345))
    counts = np.array([np.histogram(_pair_distances(x, geometry), bins=edges)[0] if len(x) > 1 else np.zeros(len(edges) - 1) for x in xs])
    ns = np.array([len(x) for x in xs], dtype=float)
    vol = geometry.volume
    valid = norm > 0
    safe = np.where(valid, norm, 1.0)

    def rho2_of(idx):
        return np.where(valid, 2.0 * counts[idx].mean(axis=0) / safe, np.nan)

    rho1 = ns.mean() / vol
    rho2 = rho2_of(np.arange(len(xs)))
    per_block = []
    for idx in _blocks(len(xs)):
        per_block.append(rho2_of(idx) - (ns[idx].mean() / vol) ** 2)
    se = np.std(per_block, axis=0, ddof=1) / math.sqrt(N_BLOCKS)
    return CorrelationEstimate(edges, rho1, rho2, rho2 - rho1**2, se, geometry.dim)


def _window_counts(x, geometry: Domain, width, offsets):
    """Counts of points in cube windows [a, a + width)^d for each offset a (rectangular cells)."""
    rel = x[None, :, :] - offsets[:, None, :]
    if geometry.is_periodic:
        rel = geometry.reduce(rel.reshape(-1, geometry.dim)).reshape(rel.shape)
    return np.all((rel >= 0) & (rel < width), axis=2).sum(axis=1)


def number_variance(samples, windows, geometry: Domain, n_offsets=16):
    """Counting statistics in cube windows of the given side lengths.

    Periodic geometries average over n_offsets evenly spaced translates; free
    domains use windows centred in the bounding box.  Returns a list of
    per-window dicts and a flag telling whether Var/|D| decreases over the
    largest three windows.
    """
    xs = [_coords(f) for f in samples]
    d = geometry.dim
    lo, hi = geometry.bounding_box()
    rows = []
    for w in windows:
        if not 0 < w < float(np.min(hi - lo)):
            raise RieszError(f"window {w} does not fit in the domain")
        if geometry.is_periodic:
            t = (np.arange(n_offsets) / n_offsets)[:, None] * np.ones(d)
            offsets = lo + t * (hi - lo)
        else:
            offsets = (0.5 * (lo + hi) - w / 2)[None, :]
        counts = np.array([_window_counts(x, geometry, w, offsets) for x in xs], dtype=float)
        vol = w**d
        mean = counts.mean()
        var = counts.var(ddof=1) if counts.size > 1 else math.nan
        blocks = [counts[idx] for idx in _blocks(len(xs))]
        bvar = np.array([b.var(ddof=1) for b in blocks])
        bmean = np.array([b.mean() for b in blocks])
        rows.append(
            {
                "window": float(w),
                "volume": vol,
                "mean": mean,
                "variance": var,
                "variance_per_volume": var / vol,
                "variance_per_volume_se": float(np.std(bvar / vol, ddof=1) / math.sqrt(N_BLOCKS)),
                "variance_to_mean": var / mean if mean > 0 else math.nan,
                "variance_to_mean_se": float(np.std(bvar / np.where(bmean > 0, bmean, np.nan), ddof=1) / math.sqrt(N_BLOCKS)),
            }
        )
    ratios = [r["variance_per_volume"] for r in rows][-3:]
    trend = len(ratios) == 3 and all(a > b for a, b in zip(ratios, ratios[1:]))
    return rows, trend


def _tail_integral(f, k, order=24):
    """int_0^k f(r) dr on unit panels with fixed Gauss-Legendre nodes."""
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    pts = (np.arange(k)[:, None] + t[None, :]).ravel()
    return float(np.sum(f(pts) * np.tile(0.5 * w, k)))


def sum_rule_residual(rho2T, rho: float, dim: int = 1, r_max: float | None = None, k0: int = 1000):
    """rho + int rho2T over R^d.

    A callable is integrated radially on unit panels up to k0, 2 k0 and 4 k0
    and Richardson-extrapolated assuming a 1/R tail; a CorrelationEstimate is
    summed bin by bin (NaN bins skipped).
    """
    if isinstance(rho2T, CorrelationEstimate):
        vals = np.nan_to_num(rho2T.rho2T, nan=0.0)
        return float(rho + np.sum(vals * rho2T.shell_measure()))
    area = unit_sphere_area(dim)

    def radial(r):
        return area * r ** (dim - 1) * rho2T(r)

    if r_max is not None:
        return rho + _tail_integral(radial, int(math.ceil(r_max)))
    i1, i2, i4 = (_tail_integral(radial, m * k0) for m in (1, 2, 4))
    # two Richardson steps: c/R then c'/R^2
    a1, a2 = 2 * i2 - i1, 2 * i4 - i2
    return rho + (4 * a2 - a1) / 3
