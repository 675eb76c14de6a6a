import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nelsonlab.errors import ConfigError, NumericalError
from nelsonlab.fields import CartesianGrid, RadialGrid, ScalarField
from nelsonlab.kepler import KeplerModel
from nelsonlab.potentials import Potential
from nelsonlab.schrodinger import (
    WaveFunction,
    action_from_wavefunction,
    density_exponent,
    density_from_wavefunction,
    ground_state,
    inverse_madelung,
    madelung,
    nonlinear_coefficient,
    nonlinear_residual,
    rayleigh_quotient,
    wavefunction_from_action,
)


@pytest.fixture(scope="module")
def kepler_ground():
    # G = M = m = sigma = 1: hbar_eff = 1, so this is hydrogen with E0 = -1/2, psi ~ e^(-r)
    grid = RadialGrid.uniform(4096, 80.0)
    return grid, ground_state(Potential.kepler(1.0), 1.0, 1.0, grid)


def test_kepler_energy_and_shape(kepler_ground):
    grid, gs = kepler_ground
    assert gs.energy == pytest.approx(-0.5, rel=1e-3)
    exact = np.exp(-grid.r) / math.sqrt(math.pi)
    err = math.sqrt(grid.integrate((np.abs(gs.psi.psi) - exact) ** 2))
    assert err < 1e-3
    assert gs.psi.norm == pytest.approx(1.0, abs=1e-12)


def test_rayleigh_quotient_of_exact_state(kepler_ground):
    grid, gs = kepler_ground
    e = rayleigh_quotient(Potential.kepler(1.0), 1.0, 1.0, grid, np.exp(-grid.r))
    assert e == pytest.approx(gs.energy, abs=1e-7)
    assert e >= gs.energy - 1e-12


@pytest.mark.parametrize("m,sigma,omega", [(1.0, 1.0, 1.0), (2.0, 0.5, 3.0)])
def test_harmonic_radial(m, sigma, omega):
    # E0 = (3/2) hbar omega with hbar = m sigma^2
    width = sigma / math.sqrt(omega)
    grid = RadialGrid.uniform(2000, 10 * width)
    gs = ground_state(Potential.harmonic(m * omega ** 2), m, sigma, grid)
    assert gs.energy == pytest.approx(1.5 * m * sigma ** 2 * omega, rel=1e-5)


def test_harmonic_cartesian_1d_and_2d():
    grid = CartesianGrid.uniform(-8.0, 8.0, 801, 1)
    gs = ground_state(Potential.harmonic(1.0), 1.0, 1.0, grid)
    assert gs.energy == pytest.approx(0.5, rel=1e-4)
    grid2 = CartesianGrid.uniform(-7.0, 7.0, 141, 2)
    gs2 = ground_state(Potential.harmonic(1.0), 1.0, 1.0, grid2)
    assert gs2.energy == pytest.approx(1.0, rel=2e-3)


def test_imaginary_time_agrees_with_inverse_iteration():
    grid = RadialGrid.uniform(400, 40.0)
    a = ground_state(Potential.kepler(1.0), 1.0, 1.0, grid, method="inverse")
    b = ground_state(Potential.kepler(1.0), 1.0, 1.0, grid, method="imaginary-time", tol=1e-10)
    assert b.method == "imaginary-time"
    assert b.energy == pytest.approx(a.energy, rel=1e-8)


def test_galactic_units_converge():
    # the residual tolerance is relative to max |U|, so large energy scales still converge
    model = KeplerModel.from_v0(4.3e-6, 1e10, 144.0)
    grid = RadialGrid.uniform(2048, 40 * model.r0)
    gs = ground_state(Potential.kepler(model.gmm), 1.0, model.sigma, grid)
    assert gs.energy == pytest.approx(-model.energy_scale, rel=1e-3)


def test_no_bound_state():
    grid = RadialGrid.uniform(200, 10.0)
    with pytest.raises(NumericalError, match="no bound state"):
        ground_state(Potential.free(), 1.0, 1.0, grid)


def test_bad_arguments():
    grid = RadialGrid.uniform(50, 10.0)
    with pytest.raises(ConfigError):
        ground_state(Potential.kepler(1.0), 1.0, 0.0, grid)
    with pytest.raises(ConfigError):
        ground_state(Potential.kepler(1.0), 1.0, 1.0, grid, method="lanczos")


def test_density_and_action_of_ground_state(kepler_ground):
    grid, gs = kepler_ground
    wf = gs.psi
    assert density_exponent(wf.C, wf.m, wf.sigma, wf.mu) == 1.0
    p = density_from_wavefunction(wf)
    assert p.integral() == pytest.approx(1.0, abs=1e-12)
    pair = action_from_wavefunction(wf, floor=1e-12)
    ok = np.isfinite(pair.R.values)
    # a real positive state has S = 0 and R = (m sigma^2 / 2) ln |psi|^2
    assert np.all(pair.S.values[ok] == 0)
    assert np.allclose(pair.R.values[ok], 0.5 * np.log(np.abs(wf.psi[ok]) ** 2))


@settings(max_examples=50)
@given(st.floats(0.1, 3.0), st.floats(-2.0, 2.0), st.floats(0.05, 5.0))
def test_madelung_round_trip(width, k, eps):
    grid = CartesianGrid.uniform(-3.0, 3.0, 121)
    x = grid.axes[0]
    rho = ScalarField(grid, np.exp(-x ** 2 / width))
    theta = ScalarField(grid, k * x * eps)
    psi = madelung(rho, theta, eps)
    rho2, theta2 = inverse_madelung(psi, eps, unwrap=True)
    assert np.allclose(rho2.values, rho.values, rtol=1e-12, atol=0)
    assert np.allclose(theta2.values - theta2.values[60], theta.values - theta.values[60], atol=1e-9 * eps)


@settings(max_examples=30)
@given(st.floats(-1.5, 1.5), st.sampled_from([1, -1]), st.floats(0.3, 3.0))
def test_action_round_trip(k, mu, scale):
    grid = CartesianGrid.uniform(-3.0, 3.0, 121)
    x = grid.axes[0]
    m, sigma = 1.3, 0.7
    C = scale * (-mu * m * sigma ** 2)
    S = ScalarField(grid, k * x)
    p = ScalarField(grid, np.exp(-x ** 2))
    wf = wavefunction_from_action(S, p, C, m, sigma, mu)
    pair = action_from_wavefunction(wf, floor=0.0, reference=(60,))
    assert np.allclose(pair.S.values, k * (x - x[60]), atol=1e-9)
    assert np.allclose(density_from_wavefunction(wf).values, p.normalized().values, rtol=1e-9)


def test_nonlinear_coefficient_vanishes_only_in_linear_case():
    m, sigma = 2.0, 0.5
    for mu in (1, -1):
        assert nonlinear_coefficient(-mu * m * sigma ** 2, m, sigma, mu) == 0.0
        assert nonlinear_coefficient(-2 * mu * m * sigma ** 2, m, sigma, mu) != 0.0


@pytest.mark.parametrize("factor", [1.0, 2.0, -0.5])
def test_ground_state_solves_nonlinear_equation_for_any_C(kepler_ground, factor):
    grid, gs = kepler_ground
    wf = gs.psi
    res = nonlinear_residual(wf, Potential.kepler(1.0), gs.energy, C=factor * wf.linear_C, floor=1e-12)
    # away from the Coulomb singularity and inside the unmasked core
    interior = (grid.r > 0.2) & (grid.r < 10.0)
    rel = np.max(np.abs(res.field.values[interior])) / np.max(np.abs(wf.psi))
    assert rel < 1e-3


def test_wavefunction_validation():
    grid = RadialGrid.uniform(10, 1.0)
    with pytest.raises(ConfigError):
        WaveFunction(grid, np.ones(10), 0.0, 1.0, 1.0)
    with pytest.raises(ConfigError):
        WaveFunction(grid, np.ones(9), 1.0, 1.0, 1.0)
