"""Closed-form and semi-exact reference values.

Covers the 1D Coulomb transfer operator, circular log-gas partition
functions, log-gas free energies, sine-kernel correlations and a registry of
named constants.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .errors import ConvergenceError, RieszError

_TAIL_LOG = 37.0  # e^{-37} < 1e-16


# ---------------------------------------------------------------------------
# 1D Coulomb transfer operator


@lru_cache(maxsize=32)
def _panel_basis(p):
    """Nodes on [0, 1], weights, and the partial-integration matrix S.

    S[i, j] = int_0^{t_i} l_j(t) dt for the Lagrange basis l_j on the nodes.
    """
    x, w = np.polynomial.legendre.leggauss(p)
    vander = np.polynomial.legendre.legvander(x, p - 1)
    inv = np.linalg.inv(vander)
    return 0.5 * (x + 1.0), 0.5 * w, inv, _legendre_integrals(x, p) @ inv * 0.5


def _legendre_integrals(t, p):
    """Matrix of int_{-1}^{t_i} P_j for j < p, with t on [-1, 1]."""
    t = np.asarray(t, dtype=float)
    P = np.polynomial.legendre.legvander(t, p)
    out = np.empty((len(t), p))
    out[:, 0] = t + 1.0
    for j in range(1, p):
        out[:, j] = (P[:, j + 1] - P[:, j - 1]) / (2 * j + 1)
    return out


@dataclass(frozen=True)
class TransferOperatorGrid:
    """Composite Gauss-Legendre grid on [-y_max, y_max] with unit-length panels.

    Unit panels put the indicator jump at z = y + 1 at the same local position
    one panel over, so the partial panel is handled exactly by a spectral
    integration matrix.
    """

    y_max: int
    nodes: int = 256
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.y_max < 1 or int(self.y_max) != self.y_max:
            raise RieszError("y_max must be a positive integer")
        if self.nodes < 64:
            raise RieszError("transfer grid needs at least 64 nodes")
        t, w, _, _ = _panel_basis(self.per_panel)
        starts = np.arange(-self.y_max, self.y_max, dtype=float)
        object.__setattr__(self, "points", (starts[:, None] + t[None, :]).ravel())
        object.__setattr__(self, "weights", np.tile(w, len(starts)))

    @classmethod
    def for_beta(cls, beta, nodes=256):
        return cls(max(1, math.ceil(math.sqrt(2 * _TAIL_LOG / beta))), nodes)

    @property
    def panels(self):
        return 2 * self.y_max

    @property
    def per_panel(self):
        return max(4, self.nodes // self.panels)

    def covers(self, beta):
        return math.exp(-beta * self.y_max**2 / 2) < 1e-16


def _integration_operator(grid):
    """Matrix J with (J f)_i ~ int_{-y_max}^{y_i + 1} f(z) dz (capped at y_max)."""
    p, m = grid.per_panel, grid.panels
    _, w, _, S = _panel_basis(p)
    n = p * m
    J = np.zeros((n, n))
    for a in range(m):
        rows = slice(a * p, (a + 1) * p)
        full = min(a + 1, m)
        J[rows, : full * p] = np.tile(w, full)
        if a + 1 < m:
            J[rows, (a + 1) * p : (a + 2) * p] = S
    return J


def _transfer_matrix(beta, grid):
    g = np.exp(-0.5 * beta * grid.points**2)
    return g[:, None] * _integration_operator(grid) * g[None, :]


def _power_iteration(A, tol=1e-12, max_steps=100_000):
    v = np.ones(A.shape[0])
    lam = 0.0
    for step in range(max_steps):
        u = A @ v
        new = np.linalg.norm(u) / np.linalg.norm(v)
        v = u / np.linalg.norm(u)
        if step > 2 and abs(new - lam) <= tol * new:
            return new, v
        lam = new
    raise ConvergenceError("power iteration did not converge in 1e5 steps")


@dataclass(frozen=True)
class KunzSolution:
    beta: float
    lambda1: float
    psi: np.ndarray
    grid: TransferOperatorGrid
    left_lambda1: float

    def __iter__(self):
        # allows `lam, psi = kunz_lambda1(...)`
        return iter((self.lambda1, self.psi))

    def evaluate(self, y):
        """Eigenfunction at arbitrary points through the Nystrom interpolant."""
        y = np.asarray(y, dtype=float)
        flat = np.atleast_1d(y).ravel()
        g = self.grid
        p = g.per_panel
        _, w, inv, _ = _panel_basis(p)
        f = np.exp(-0.5 * self.beta * g.points**2) * self.psi
        panel_mass = (f.reshape(-1, p) * w).sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(panel_mass)])
        upper = np.clip(flat + 1.0, -g.y_max, g.y_max)
        idx = np.clip(np.floor(upper + g.y_max).astype(int), 0, g.panels - 1)
        local = upper + g.y_max - idx
        coef = inv @ f.reshape(-1, p).T  # Legendre coefficients per panel
        partial = np.einsum("ij,ji->i", _legendre_integrals(2 * local - 1, p), coef[:, idx]) * 0.5
        val = np.exp(-0.5 * self.beta * flat**2) * (cum[idx] + partial) / self.lambda1
        val[np.abs(flat) > g.y_max] = 0.0
        return val.reshape(y.shape) if y.ndim else float(val[0])


def kunz_lambda1(beta, grid=None):
    """Largest eigenvalue and positive L^2-normalised eigenfunction of the 1D Coulomb transfer operator.

    The kernel is exp(-beta (y^2 + z^2) / 2) * 1(y - z >= -1) on the real line.
    The returned object unpacks as (lambda1, psi) with psi given at grid.points.
    """
    if not beta > 0:
        raise RieszError("beta must be positive")
    grid = grid or TransferOperatorGrid.for_beta(beta)
    if not grid.covers(beta):
        raise RieszError(f"grid y_max={grid.y_max} too small for beta={beta}")
    A = _transfer_matrix(beta, grid)
    sw = np.sqrt(grid.weights)
    # W^{1/2} A W^{-1/2}: acts on sqrt(w) * psi so plain 2-norms are L^2 norms
    B = sw[:, None] * A / sw[None, :]
    lam, v = _power_iteration(B)
    left, _ = _power_iteration(B.T)
    psi = np.abs(v) / sw
    psi /= math.sqrt(np.sum(grid.weights * psi**2))
    return KunzSolution(float(beta), lam, psi, grid, left)


def kunz_free_energy(beta, nodes=256):
    """Free energy per particle of the 1D Coulomb Jellium at unit density."""
    lam = kunz_lambda1(beta, TransferOperatorGrid.for_beta(beta, nodes)).lambda1
    return 1.0 / 12.0 - math.log(lam) / beta


def kunz_density(beta, x, tau=0.0, solution=None):
    """Limiting one-point density sum_k psi(-x-k-tau) psi(x+k+tau), normalised to one particle per cell."""
    sol = solution or kunz_lambda1(beta)
    g = sol.grid
    norm = float(np.sum(g.weights * sol.psi * sol.evaluate(-g.points)))
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    kmax = 2 * g.y_max + 2
    ks = np.arange(-kmax, kmax + 1)
    y = flat[:, None] + ks[None, :] + tau
    dens = (sol.evaluate(-y) * sol.evaluate(y)).sum(axis=1) / norm
    return dens.reshape(x.shape) if x.ndim else float(dens[0])


# ---------------------------------------------------------------------------
# Log gases


def selberg_log_partition(n, beta):
    """log of int_{[0,2pi]^n} prod_{j<k} |e^{i t_j} - e^{i t_k}|^beta dt."""
    if n < 1:
        raise RieszError("need at least one particle")
    return n * math.log(2 * math.pi) + gammaln(1 + beta * n / 2) - n * gammaln(1 + beta / 2)


def selberg_direct(n, beta):
    """The circular partition function by direct quadrature (n <= 3).

    Rotation invariance fixes t_1 = 0; the remaining angles are integrated
    with adaptive quadrature, splitting the square at its diagonal for n = 3.
    """
    from scipy.integrate import dblquad, quad

    def chord(u):
        return abs(2.0 * math.sin(u / 2))

    two_pi = 2 * math.pi
    if n == 1:
        return two_pi
    if n == 2:
        val, _ = quad(lambda t: chord(t) ** beta, 0.0, two_pi, epsabs=0, epsrel=1e-12, limit=200)
        return two_pi * val
    if n == 3:
        def f(u, t):
            return (chord(t) * chord(u) * chord(t - u)) ** beta

        lower, _ = dblquad(f, 0.0, two_pi, 0.0, lambda t: t, epsabs=0, epsrel=1e-9)
        upper, _ = dblquad(f, 0.0, two_pi, lambda t: t, two_pi, epsabs=0, epsrel=1e-9)
        return two_pi * (lower + upper)
    raise RieszError("direct quadrature is only offered for n <= 3")


def circular_mean_energy(n, beta):
    """Mean of -sum_{j<k} log|e^{i t_j} - e^{i t_k}| under the circular beta ensemble.

    Minus the beta-derivative of the log partition function.
    """
    from scipy.special import digamma

    return -(n / 2) * digamma(1 + beta * n / 2) + (n / 2) * digamma(1 + beta / 2)


def log_gas_free_energy(beta, rho):
    """Thermodynamic free energy per unit length of the 1D log gas."""
    if not (beta > 0 and rho > 0):
        raise RieszError("beta and rho must be positive")
    return rho * (gammaln(1 + beta / 2) / beta - 0.5 * math.log(math.pi * beta)) + (2 - beta) / (
        2 * beta
    ) * rho * (math.log(rho) - 1)


def f2d_beta2(rho):
    """Free energy per unit area of the 2D log gas at beta = 2."""
    if not rho > 0:
        raise RieszError("rho must be positive")
    return -math.log(2 * math.pi**2) / 4 * rho + rho * math.log(rho) / 4


def sine_kernel_rho2T(r, beta=2, mode=None):
    """Truncated pair correlation of the bulk log gas at unit density.

    beta=2 is exact; beta=1 and beta=4 are large-r expansions valid for r >= 2.
    """
    r = np.asarray(r, dtype=float)
    mode = mode or {1: "asymptotic1", 2: "exact2", 4: "asymptotic4"}.get(beta)
    if mode == "exact2":
        out = -np.sinc(r) ** 2
    elif mode == "asymptotic1":
        _warn_small(r)
        out = -1 / (math.pi**2 * r**2) + (3 + np.cos(2 * math.pi * r)) / (2 * math.pi**4 * r**4)
    elif mode == "asymptotic4":
        _warn_small(r)
        out = np.cos(2 * math.pi * r) / (4 * r) - (1 + math.pi / 2 * np.sin(2 * math.pi * r)) / (
            4 * math.pi**2 * r**2
        )
    else:
        raise RieszError(f"no correlation formula for beta={beta}, mode={mode}")
    return float(out) if out.ndim == 0 else out


def _warn_small(r):
    if np.any(r < 2):
        warnings.warn("asymptotic correlation used below r = 2", RuntimeWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# Named constants

_CONSTANTS = {
    "lieb_narnhofer_d3": (
        0.6 * (4.5 * math.pi) ** (1 / 3),
        "Lieb-Narnhofer lower bound constant, 3D Coulomb Jellium: (3/5)(9 pi/2)^(1/3)",
    ),
    "lieb_narnhofer_d2": (
        3 / 8 + 0.25 * math.log(math.pi),
        "lower bound constant, 2D log Jellium: 3/8 + log(pi)/4",
    ),
    "e_1d_coulomb": (1 / 12, "1D Coulomb Jellium ground-state energy per particle, -zeta(-1)"),
    "e_1d_log": (-0.5 * math.log(2 * math.pi), "1D log-gas ground-state energy per particle, zeta'(0)"),
    "zeta_bcc_1": (-1.4442, "Epstein zeta of BCC at s=1, unit covolume"),
    "zeta_fcc_1": (-1.4441, "Epstein zeta of FCC at s=1, unit covolume"),
    "zeta_prime_triangular_0": (-0.6606, "derivative at 0 of the triangular-lattice Epstein zeta"),
    "f2d_beta2_rho1": (-math.log(2 * math.pi**2) / 4, "2D log gas free energy at beta=2, rho=1"),
    "ocp_3d_transition_gamma": (175.0, "approximate 3D Coulomb Jellium freezing coupling (simulation)"),
}


def reference_constants(name=None):
    """Return (value, provenance) for a registered constant, or the full registry when name is None."""
    if name is None:
        return dict(_CONSTANTS)
    try:
        return _CONSTANTS[name]
    except KeyError:
        raise RieszError(f"unknown constant: {name}") from None
