import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rieszgas.core import Domain, PointConfiguration, RieszExponent, unit_ball_volume
from rieszgas.errors import NeutralityError, RieszError
from rieszgas.jellium import (
    JelliumSystem,
    background_potential,
    background_potential_gradient,
    background_self_energy,
    discrepancy,
    jellium_energy,
    jellium_energy_1d_coulomb,
    jellium_energy_gradient,
    sharp_background_shift,
)
from rieszgas.lattice import lattice_catalog, periodic_potential


def system(domain, s, rho_b=1.0):
    return JelliumSystem(domain, rho_b, RieszExponent(s, domain.dim))


def mc_potential(domain, s, x, n=10**7, seed=7):
    """Monte Carlo estimate of int_Omega V_s(x - y) dy with its standard error."""
    rng = np.random.default_rng(seed)
    y = domain.sample_uniform(rng, n)
    v = np.linalg.norm(y - x, axis=1) ** (-s) * domain.volume
    return v.mean(), v.std() / math.sqrt(n)


def test_interval_potentials_closed_form():
    assert background_potential(system(Domain.interval(-1, 1), 0.5), [0.0]) == pytest.approx(4.0, rel=1e-12)
    assert background_potential(system(Domain.interval(-1, 1), -1.0), [0.0]) == pytest.approx(-1.0, rel=1e-12)
    small = background_potential(system(Domain.interval(-1, 1), 0.5), [0.3])
    big = background_potential(system(Domain.interval(-2, 2), 0.5), [0.6])
    assert big == pytest.approx(2**0.5 * small, rel=1e-12)
    e1 = background_self_energy(system(Domain.interval(-1, 1), 0.5))
    e2 = background_self_energy(system(Domain.interval(-2, 2), 0.5))
    assert e2 == pytest.approx(2**1.5 * e1, rel=1e-12)


def test_interval_potential_log_branch():
    # int_{-1}^{1} -log|y| dy = 2
    assert background_potential(system(Domain.interval(-1, 1), 0.0), [0.0]) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("domain", [Domain.box([0, 0], [1, 1]), Domain.ball([0, 0], 1.0)])
def test_planar_potentials_against_monte_carlo(domain):
    x = np.array([0.5, 0.5]) if domain.kind == "box" else np.array([0.2, -0.1])
    mean, se = mc_potential(domain, 1.0, x, n=2 * 10**6)
    val = background_potential(system(domain, 1.0), x)
    assert abs(val - mean) < 3 * se


def test_self_energy_unit_interval():
    assert background_self_energy(system(Domain.interval(0, 1), -1.0)) == pytest.approx(-1 / 6, rel=1e-12)


def test_small_1d_examples():
    dom = Domain.interval(-1, 1)
    cfg = PointConfiguration([[-0.5], [0.5]], dom)
    assert jellium_energy(system(dom, -1.0), cfg) == pytest.approx(1 / 6, abs=1e-12)
    assert jellium_energy_1d_coulomb(cfg) == pytest.approx(1 / 6, abs=1e-15)
    one = PointConfiguration([[0.0]], Domain.interval(-0.5, 0.5))
    assert jellium_energy_1d_coulomb(one) == pytest.approx(1 / 12, abs=1e-15)


def test_empty_configuration_is_background_only():
    sys_ = system(Domain.box([0, 0], [2, 1]), 0.5)
    empty = PointConfiguration(np.zeros((0, 2)), sys_.domain)
    assert jellium_energy(sys_, empty) == background_self_energy(sys_)


def test_neutrality_enforced_for_nonpositive_s():
    sys_ = system(Domain.interval(0, 3), -1.0)
    with pytest.raises(NeutralityError):
        jellium_energy(sys_, PointConfiguration([[0.5], [1.5]], sys_.domain))
    with pytest.raises(RieszError):
        system(Domain.interval(0, 1), 1.0)


def test_random_1d_identity(rng):
    for _ in range(20):
        n = int(rng.integers(1, 30))
        dom = Domain.interval(-n / 2, n / 2)
        x = np.sort(rng.uniform(-n / 2, n / 2, n))
        cfg = PointConfiguration(x[:, None], dom)
        assert jellium_energy(system(dom, -1.0), cfg) == pytest.approx(jellium_energy_1d_coulomb(cfg), abs=1e-10)


@given(st.floats(0.3, 3.0), st.sampled_from([0.5, 1.0, 1.5, -0.5, -1.0]), st.integers(0, 2**31))
def test_scaling_identity_2d(lam, s, seed):
    rng = np.random.default_rng(seed)
    dom = Domain.box([0, 0], [2, 1])
    x = dom.sample_uniform(rng, 2)
    base = jellium_energy(system(dom, s, 1.0), PointConfiguration(x, dom))
    big = dom.scaled(lam)
    scaled = jellium_energy(system(big, s, lam**-2), PointConfiguration(lam * x, big))
    assert scaled == pytest.approx(lam ** (-s) * base, rel=1e-9, abs=1e-12)


@given(st.floats(0.3, 3.0), st.integers(0, 2**31))
def test_scaling_identity_ball_3d(lam, seed):
    rng = np.random.default_rng(seed)
    dom = Domain.ball([0, 0, 0], 1.0)
    x = dom.sample_uniform(rng, 3)
    base = jellium_energy(system(dom, 1.0, 0.7), PointConfiguration(x, dom))
    big = dom.scaled(lam)
    scaled = jellium_energy(system(big, 1.0, 0.7 * lam**-3), PointConfiguration(lam * x, big))
    assert scaled == pytest.approx(base / lam, rel=1e-9)


def test_gradient_matches_finite_differences(rng):
    for dom, s in ((Domain.interval(0, 4), 0.5), (Domain.box([0, 0], [2, 2]), 1.0), (Domain.ball([0, 0, 0], 1.2), 1.0)):
        sys_ = system(dom, s)
        x = dom.sample_uniform(rng, 3) * 0.8 + 0.1 * np.mean(dom.bounding_box(), axis=0)
        g = jellium_energy_gradient(sys_, x)
        h = 1e-6
        for i in range(3):
            for k in range(dom.dim):
                xp, xm = x.copy(), x.copy()
                xp[i, k] += h
                xm[i, k] -= h
                fd = (jellium_energy(sys_, PointConfiguration(xp, dom)) - jellium_energy(sys_, PointConfiguration(xm, dom))) / (2 * h)
                assert g[i, k] == pytest.approx(fd, rel=1e-4, abs=1e-6)
        gb = background_potential_gradient(sys_, x[0])
        assert np.all(np.isfinite(gb))


def test_discrepancy_examples(rng):
    dom = Domain.interval(-20, 20)
    x = np.arange(-10.0, 11.0)[:, None]
    assert discrepancy(x, [0.0], 2.5, 1.0, dom) == pytest.approx(0.0, abs=1e-14)
    box = Domain.box([0, 0], [10, 10])
    assert discrepancy(np.zeros((0, 2)), [5.0, 5.0], 1.0, 1.0, box) == pytest.approx(-1.0, abs=1e-10)
    # Poisson points of intensity 1: mean discrepancy vanishes
    vals = []
    for _ in range(2000):
        pts = rng.uniform(0, 10, size=(rng.poisson(100), 2))
        vals.append(discrepancy(pts, [5.0, 5.0], 2.0, 1.0, box))
    vals = np.array(vals)
    assert abs(vals.mean()) < 3 * vals.std() / math.sqrt(len(vals))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.5, 2.0), st.integers(0, 2**31))
def test_discrepancy_translation_covariant(a, b, r, seed):
    rng = np.random.default_rng(seed)
    dom = Domain.box([0, 0], [4, 3])
    x = dom.sample_uniform(rng, 7)
    tau = np.array([1.5, 1.2])
    shift = np.array([a, b])
    q0 = discrepancy(x, tau, r, 1.3, dom)
    q1 = discrepancy(x + shift, tau + shift, r, 1.3, dom.translated(shift))
    assert q1 == pytest.approx(q0, abs=1e-9)


def test_sharp_background_cubic_coulomb():
    lat = lattice_catalog("cubic")
    x = np.array([0.1, 0.2, 0.3])
    trunc, limit = sharp_background_shift(lat, 1.0, x, 20.0)
    assert limit == pytest.approx(float(periodic_potential(lat, 1.0, x[None, :])[0]) + math.pi / 6, abs=1e-12)
    assert abs(trunc - limit) < 5e-3


def test_sharp_background_converges_monotonically():
    lat = lattice_catalog("cubic")
    x = np.array([0.1, 0.2, 0.3])
    errs = [abs(np.subtract(*sharp_background_shift(lat, 1.0, x, R))) for R in (5.0, 10.0, 20.0)]
    assert errs[0] > errs[1] > errs[2]


def test_sharp_background_inside_window_predicts_tail():
    # for d-2 < s < d the sharp truncation converges like R^{d-s-2}; the
    # leading correction is the cell second moment spread over the sphere
    lat = lattice_catalog("cubic")
    x = np.array([0.1, 0.2, 0.3])
    s, R = 1.5, 20.0
    trunc, limit = sharp_background_shift(lat, s, x, R)
    tail = (1 / 24) * s * 4 * math.pi * R ** (3 - s - 2)
    assert limit == pytest.approx(float(periodic_potential(lat, s, x[None, :])[0]), abs=1e-12)
    assert abs(trunc - (limit + tail)) < 0.1 * tail


def test_sharp_background_one_dimension():
    lat = lattice_catalog("integers")
    trunc, limit = sharp_background_shift(lat, -1.0, np.array([0.25]), 50.0)
    assert trunc == pytest.approx(limit, abs=1e-10)
