import math

import numpy as np
import pytest
from scipy import integrate, special

from rieszgas.core import RieszExponent
from rieszgas.errors import RieszError
from rieszgas.jellium import _interval_potential
from rieszgas.meanfield import (
    DiscretizedMeasure,
    capacity,
    el_residual,
    harmonic_trap_density,
    harmonic_trap_radius,
    measure_potential,
    project_simplex,
    short_range_profile,
    solve_equilibrium_measure,
)


def trap(x):
    return x**2


@pytest.fixture(scope="module")
def semicircle():
    return solve_equilibrium_measure(trap, RieszExponent(0.0), n=400)


def test_semicircle_recovery(semicircle):
    R = harmonic_trap_radius(0.0)
    assert R == 1.0
    ref = lambda x: 2 / (math.pi * R**2) * np.sqrt(np.clip(R**2 - x**2, 0, None))  # noqa: E731
    assert semicircle.l1_distance(ref) < 0.02
    assert semicircle.l1_distance(lambda x: harmonic_trap_density(0.0, R, x)) < 0.02


def test_semicircle_residual_and_monotone_history(semicircle):
    assert el_residual(semicircle, trap, RieszExponent(0.0)) < 1e-2
    h = np.array(semicircle.history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))
    assert semicircle.total_mass == pytest.approx(1.0, abs=1e-12)


def test_perturbed_and_point_mass_residuals(semicircle):
    exp = RieszExponent(0.0)
    q = semicircle.masses.copy()
    k = np.argmax(q > 0)
    moved = 0.1
    q *= 1 - moved
    q[k] += moved
    bad = DiscretizedMeasure(semicircle.nodes, semicircle.weights, q / semicircle.weights, 1.0)
    assert el_residual(bad, trap, exp) > 5e-2
    point = np.zeros_like(q)
    point[len(q) // 2] = 1.0
    spike = DiscretizedMeasure(semicircle.nodes, semicircle.weights, point / semicircle.weights, 1.0)
    assert el_residual(spike, trap, exp) > 0.5


@pytest.mark.parametrize("s,tol", [(0.5, 0.03), (-0.5, 0.03), (-1.0, 0.03)])
def test_harmonic_trap_profiles(s, tol):
    meas = solve_equilibrium_measure(trap, RieszExponent(s), n=400)
    R = harmonic_trap_radius(s)
    assert meas.l1_distance(lambda x: harmonic_trap_density(s, R, x)) < tol
    assert el_residual(meas, trap, RieszExponent(s)) < 1e-2


def test_trap_radius_closed_forms():
    assert harmonic_trap_radius(-1.0) == pytest.approx(0.5, abs=1e-12)
    # the radius scales as a^{-1/(s+2)}
    assert harmonic_trap_radius(0.5, 4.0) == pytest.approx(harmonic_trap_radius(0.5) * 4 ** (-1 / 2.5), rel=1e-12)


def test_trap_density_closed_forms():
    x = np.linspace(-1.5, 1.5, 31)
    assert harmonic_trap_density(0.0, 1.2, x) == pytest.approx(2 / (math.pi * 1.44) * np.sqrt(np.clip(1.44 - x**2, 0, None)))
    assert harmonic_trap_density(-1.0, 1.2, x) == pytest.approx(np.where(np.abs(x) < 1.2, 1 / 2.4, 0.0))
    total, _ = integrate.quad(lambda t: harmonic_trap_density(0.5, 1.3, t), -1.3, 1.3, epsabs=1e-13, epsrel=1e-13)
    assert total == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(RieszError):
        harmonic_trap_density(1.5, 1.0, x)


def test_trap_radius_from_beta_integral():
    # independent route: the potential of (1 - y^2)^a at 0 minus at x, for s = 0.5,
    # by Gauss-Jacobi on each side of the singularity
    s = 0.5
    a = (s + 1) / 2
    c = special.gamma((4 + s) / 2) / (math.sqrt(math.pi) * special.gamma((3 + s) / 2))

    def pot(x):
        f = lambda y: (1 - y * y) ** a * abs(x - y) ** (-s)  # noqa: E731
        return c * (integrate.quad(f, -1, x, limit=400, epsabs=1e-13)[0] + integrate.quad(f, x, 1, limit=400, epsabs=1e-13)[0])

    B = (pot(0.0) - pot(0.5)) / 0.25
    assert harmonic_trap_radius(s) == pytest.approx(B ** (1 / (s + 2)), rel=1e-6)


def test_flat_container_potential_constant_and_capacity():
    exp = RieszExponent(0.5)
    meas = solve_equilibrium_measure(lambda x: np.zeros(len(x)), exp, 1.0, (-1.0, 1.0), 400, confined=True)
    phi = measure_potential(meas, exp)[meas.density > 1e-9]
    assert np.ptp(phi) / phi.mean() < 0.02
    cap = capacity((-1.0, 1.0), exp)
    assert cap == pytest.approx(1 / phi.mean(), rel=0.02)


def test_capacity_monotone_and_homogeneous():
    exp = RieszExponent(0.5)
    c1, c2 = capacity((-1.0, 1.0), exp), capacity((-2.0, 2.0), exp)
    assert c1 < c2
    assert c2 / c1 == pytest.approx(2**0.5, rel=0.01)


def test_capacity_closed_form():
    # (1 - y^2)^{(s-1)/2} has constant s-potential pi / cos(pi s / 2) on [-1, 1]
    s = 0.5
    f = lambda y, x: (1 - y * y) ** ((s - 1) / 2) * abs(x - y) ** (-s)  # noqa: E731
    for x in (0.0, 0.6):
        val = integrate.quad(f, -1, x, args=(x,), limit=400)[0] + integrate.quad(f, x, 1, args=(x,), limit=400)[0]
        assert val == pytest.approx(math.pi / math.cos(math.pi * s / 2), rel=1e-7)
    closed = math.cos(math.pi * s / 2) * special.beta(0.5, (1 + s) / 2) / math.pi
    assert capacity((-1.0, 1.0), RieszExponent(s)) == pytest.approx(closed, rel=1e-3)


def test_uniqueness_from_random_start():
    exp = RieszExponent(0.5)
    a = solve_equilibrium_measure(trap, exp, n=200)
    b = solve_equilibrium_measure(trap, exp, n=200, seed=5)
    assert b.objective == pytest.approx(a.objective, abs=1e-7)
    assert b.l1_distance(a.density) < 1e-3


def test_background_screening():
    s = 0.5
    W = lambda x: -_interval_potential(s, -1.0, 1.0, x)  # noqa: E731
    meas = solve_equilibrium_measure(W, RieszExponent(s), mass=2.0, window=(-2.0, 2.0), n=400)
    assert meas.l1_distance(lambda x: (np.abs(x) <= 1).astype(float)) < 0.03


def test_off_support_inequality(semicircle):
    from rieszgas.meanfield import interaction_matrix

    h = semicircle.weights[0]
    phi = interaction_matrix(RieszExponent(0.0), semicircle.nodes, h) @ semicircle.masses + trap(semicircle.nodes[:, 0])
    supp = semicircle.density > 1e-9
    mu = phi[supp].mean()
    assert np.all(phi[~supp] >= mu - 1e-8)


def test_two_dimensional_coulomb_disk():
    # 2D log gas in W = |x|^2 / 2 ... circular law: uniform density 1/pi on the unit disk
    exp = RieszExponent(0.0, 2)
    W = lambda p: 0.5 * np.sum(p**2, axis=1)  # noqa: E731
    meas = solve_equilibrium_measure(W, exp, 1.0, ((-1.5, 1.5), (-1.5, 1.5)), 40)
    r = np.linalg.norm(meas.nodes, axis=1)
    ref = np.where(r < 1, 1 / math.pi, 0.0)
    assert meas.l1_distance(ref) < 0.1


def test_short_range_profile_examples():
    s, e = 2.0, math.pi**2 / 6
    nu, mu = short_range_profile(np.zeros(10), s, e, mass=1.0, weights=np.full(10, 0.1))
    assert nu == pytest.approx(np.ones(10), rel=1e-10)
    assert mu == pytest.approx((1 + s) * e, rel=1e-10)
    x, w = np.polynomial.legendre.leggauss(200)
    x, w = 3 * x, 3 * w
    nu, mu = short_range_profile(x**2, s, e, weights=w)
    assert np.sum(nu * w) == pytest.approx(1.0, abs=1e-8)
    nu2, mu2 = short_range_profile(x**2 + 0.7, s, e, weights=w)
    assert mu2 == pytest.approx(mu + 0.7, abs=1e-10)
    assert nu2 == pytest.approx(nu, abs=1e-9)
    with pytest.raises(RieszError):
        short_range_profile(x, 0.5, e)


def test_project_simplex():
    v = np.array([0.5, -1.0, 2.0, 0.3])
    p = project_simplex(v, 1.0)
    assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
    # optimality of the Euclidean projection: v - p is constant on the support
    supp = p > 0
    assert np.ptp((v - p)[supp]) < 1e-14
