import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelsonlab.errors import ConfigError
from nelsonlab.fields import RadialGrid, ScalarField
from nelsonlab.kepler import (
    CATALOG_V0_KMS,
    KeplerModel,
    cartesian_frame_derivatives,
    circular_orbit_relations,
    flat_rotation_speed,
    galaxy_estimate,
    galaxy_scan,
    ground_state_density,
    kepler_induced_potential,
    kepler_potential,
    keplerian_speed,
    milky_way_estimate,
    orthoradial_speed_squared,
    osmotic_speed,
    polar_derivatives,
    polar_velocity_decomposition,
    potential_table,
    quantity_check,
    rotation_table,
    round_sig,
    total_potential,
)
from nelsonlab.sde import PolarDiffusionSpec, simulate_polar
from nelsonlab.verify import induced_potential

NAT = KeplerModel.natural()
positive = st.floats(0.05, 20.0)


def unit_depth_model():
    # G M m / r0 = 1 with r0 = 1: G M = 1 needs sigma^4 = 1 / 2
    return KeplerModel(1.0, 1.0, 0.5 ** 0.25)


def test_natural_model():
    assert (NAT.r0, NAT.v0) == (2.0, 1.0)
    assert NAT.energy_scale == 0.5


def test_kepler_potential_examples():
    m = unit_depth_model()
    assert m.r0 == pytest.approx(1.0)
    assert kepler_potential(m, m.r0) == pytest.approx(-1.0)
    assert kepler_potential(NAT, 2.0) == -0.5
    assert abs(kepler_potential(NAT, 1e12)) < 1e-11
    with pytest.raises(ConfigError):
        kepler_potential(NAT, 0.0)


def test_induced_potential_examples():
    assert kepler_induced_potential(NAT, NAT.r0) == 0.0
    m = unit_depth_model()
    assert kepler_induced_potential(m, 2 * m.r0) == pytest.approx(-0.5)
    assert kepler_induced_potential(m, 1e12) == pytest.approx(-1.0)


@given(positive, positive, positive)
def test_total_potential_is_flat(G, M, sigma):
    model = KeplerModel(G, M, sigma)
    r = model.r0 * np.array([0.01, 0.5, 1.0, 3.0, 100.0])
    assert np.allclose(total_potential(model, r), -model.energy_scale, rtol=1e-12, atol=0)


@given(positive, positive)
def test_induced_sign_structure(sigma, x):
    model = KeplerModel(1.0, 1.0, sigma)
    r = x * model.r0
    value = kepler_induced_potential(model, r)
    if x < 1:
        assert value > 0
    elif x > 1:
        assert value < 0


def test_closed_form_matches_grid_route():
    grid = RadialGrid.uniform(4096, 40 * NAT.r0)
    p = ScalarField(grid, ground_state_density(NAT, grid.r))
    assert p.integral() == pytest.approx(1.0, rel=1e-5)
    num = induced_potential(p, NAT.m, NAT.sigma, floor=0.0).values
    sel = (grid.r >= 0.5 * NAT.r0) & (grid.r <= 10 * NAT.r0)
    assert np.max(np.abs(num - kepler_induced_potential(NAT, grid.r))[sel]) < 1e-3 * NAT.energy_scale


def test_flat_speed_examples():
    assert flat_rotation_speed(NAT) == 1.0
    assert osmotic_speed(NAT) == 1.0
    # galactic units: v0 = 144 km/s and M = 1e10 give r0 = 4.1 kpc, and back
    gal = KeplerModel.from_v0(4.3e-6, 1e10, 144.0, units="galactic")
    assert round_sig(gal.r0, 2) == 4.1
    assert flat_rotation_speed(gal) == pytest.approx(144.0, rel=1e-12)
    assert math.sqrt(2 * gal.gm / 4.1) == pytest.approx(144.0, rel=0.01)


@given(positive, positive, positive)
def test_doubling_mass_doubles_v0(G, M, sigma):
    a = KeplerModel(G, M, sigma)
    b = KeplerModel(G, 2 * M, sigma)
    assert flat_rotation_speed(b) == pytest.approx(2 * flat_rotation_speed(a), rel=1e-12)
    assert b.r0 == pytest.approx(a.r0 / 2, rel=1e-12)


def test_sigma_identification():
    model = KeplerModel.from_v0(4.3e-6, 3e11, 200.0)
    assert model.sigma ** 2 == pytest.approx(model.gm / 200.0, rel=1e-12)


def test_dimensions():
    assert quantity_check(NAT)


def test_tables():
    t = potential_table(NAT, np.array([1.0, 2.0]))
    assert t["U_induced"][0] == 0.0 and t["U_kepler"][0] == -1.0 and t["U_total"][0] == -1.0
    assert t["U_induced"][1] == -0.5
    rot = rotation_table(NAT, np.array([1.0, 4.0]))
    assert np.all(rot["v_flat"] == 1.0)
    assert rot["v_kepler"][1] == pytest.approx(0.5)
    assert keplerian_speed(NAT, 1.0) == 1.0


def test_circular_orbit_examples():
    # natural units with L0 = 1: r = sqrt(L0^2 r0 / 2 G M) = 1 and v_theta^2 = 1 = v0^2
    s = circular_orbit_relations(NAT, 1.0)
    assert s.r == pytest.approx(1.0) and s.v_theta_squared == pytest.approx(1.0)
    s2 = circular_orbit_relations(NAT, 2.0)
    assert s2.r == pytest.approx(2.0) and s2.v_theta == pytest.approx(s.v_theta)
    with pytest.raises(ConfigError):
        circular_orbit_relations(NAT, 0.0)


def test_polar_decomposition_examples():
    r = np.array([2.0, 3.0])
    th = np.array([0.1, 1.0])
    # circular orbit: D r = 0, D theta = omega
    pv = polar_velocity_decomposition(r, th, np.zeros(2), np.full(2, 0.5), -1, 0.0, 0.0)
    assert np.all(pv.v_r == 0) and np.allclose(pv.v_theta, 0.5 * r)
    # the Ito terms are imaginary and do not enter the current velocity
    noisy = polar_velocity_decomposition(r, th, np.zeros(2), np.full(2, 0.5), 1, 0.3, 0.4)
    assert np.allclose(noisy.current, pv.current)
    assert not np.allclose(noisy.complex_derivative.imag, 0.0)


@pytest.fixture(scope="module")
def circular_ensemble():
    # sigma_r = 0, r = 1, angular drift v0 / r = 1 with angular noise
    spec = PolarDiffusionSpec.constant(0.0, 1.0, sigma_r=0.0, sigma_theta=1.0, r_init=1.0, theta_init=None)
    return simulate_polar(spec, np.arange(0, 1.0001, 0.005), 50_000, 3)


def test_orthoradial_speed_matches_v0(circular_ensemble):
    state = circular_orbit_relations(NAT, 1.0)
    assert orthoradial_speed_squared(circular_ensemble) == pytest.approx(state.v_theta_squared, rel=0.03)


@pytest.mark.parametrize("mu", [1, -1])
def test_polar_chain_rule_two_routes(circular_ensemble, mu):
    ens = circular_ensemble
    cart = cartesian_frame_derivatives(ens, mu, 1, 16)
    d = polar_derivatives(ens, 1, 16)
    d_r, d_t = d.complex(mu)
    th = np.concatenate([ens.paths[:, j, 1] for j in range(1, ens.times.size - 1)])
    r = np.concatenate([ens.paths[:, j, 0] for j in range(1, ens.times.size - 1)])
    pv = polar_velocity_decomposition(r, th, d_r, d_t, mu, 0.0, 1.0)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    ep = np.stack([-np.sin(th), np.cos(th)], axis=-1)
    polar = np.array([np.mean(np.sum(pv.complex_derivative * e, axis=1)), np.mean(np.sum(pv.complex_derivative * ep, axis=1))])
    assert np.max(np.abs(cart.mean(axis=0) - polar)) < 1e-2 * np.linalg.norm(polar)
    # without the r factor on the sigma_theta^2 term the routes would still agree at r = 1,
    # so the radial Ito term is also checked against its closed form -(mu / 2) sigma_theta^2 r
    assert polar[0].imag == pytest.approx(-0.5 * mu, abs=0.02)


def test_polar_ito_term_scales_with_radius():
    spec = PolarDiffusionSpec.constant(0.0, 0.5, sigma_r=0.0, sigma_theta=1.0, r_init=3.0, theta_init=None)
    ens = simulate_polar(spec, np.arange(0, 0.5001, 0.005), 20_000, 5)
    cart = cartesian_frame_derivatives(ens, -1, 1, 8).mean(axis=0)
    assert cart[0].imag == pytest.approx(0.5 * 3.0, rel=0.03)
    assert cart[1].real == pytest.approx(0.5 * 3.0, rel=0.03)


def test_galaxy_scan_reproduces_scaling():
    for est, p in zip(galaxy_scan(), range(8, 13)):
        assert est.v0_kms == CATALOG_V0_KMS
        assert round_sig(est.r0_kpc, 2) == round_sig(4.1 * 10.0 ** (p - 10), 2)
        assert est.flags["r0_match"]
        if p in (8, 12):
            assert est.flags["endpoint_match"]
        assert not est.flags["sigma2_match"]
    first, last = galaxy_scan()[0], galaxy_scan()[-1]
    assert round_sig(first.r0_kpc * 1e3, 2) == 41.0
    assert round_sig(last.r0_kpc, 2) == 410.0


def test_milky_way_mismatch_is_flagged():
    est = milky_way_estimate()
    # 2 * 4.3e-6 * 8e10 / 220^2
    assert est.r0_kpc == pytest.approx(2 * 4.3e-6 * 8e10 / 220 ** 2, rel=1e-12)
    assert round_sig(est.r0_kpc, 3) == 14.2
    assert est.quoted["r0_kpc"] == 8.0
    assert est.flags["r0_match"] is False
    d = est.to_dict()
    assert d["r0_pc"] == pytest.approx(est.r0_kpc * 1e3)


def test_galaxy_sigma_units():
    est = galaxy_estimate(1e10, 144.0)
    assert est.sigma2_kpc_kms == pytest.approx(4.3e-6 * 1e10 / 144.0)
    assert est.sigma2_kpc2_per_s == pytest.approx(est.sigma2_kpc_kms / 3.086e16)
    with pytest.raises(ConfigError):
        galaxy_estimate(-1.0, 144.0)


def test_round_sig():
    assert round_sig(0.041466, 2) == 0.041
    assert round_sig(14.214, 3) == 14.2
    assert round_sig(0.0, 2) == 0.0
