import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nelsonlab import jets
from nelsonlab.config import RunConfig
from nelsonlab.errors import ConfigError
from nelsonlab.fields import CartesianGrid, RadialGrid, ScalarField, VectorField, osmotic_velocity
from nelsonlab.nelson import ComplexVelocityField
from nelsonlab.potentials import Potential
from nelsonlab.suites import harmonic_ensemble, kepler_ensemble, rotating_harmonic_ensemble, stationary_state
from nelsonlab.verify import (
    ResidualReport,
    StochasticNewtonProblem,
    VelocityModel,
    classical_virial_average,
    continuity_residual,
    fokker_planck_residual,
    hamilton_jacobi_residuals,
    induced_potential,
    induced_potential_jet,
    newton_residual,
    noether_angular_momentum,
    region_mask,
    strong_virial,
)
from nelsonlab.verify import weak_virial

MUS = [1, -1]


def kepler_state(mu, n=4096, r0=2.0):
    g = RadialGrid.uniform(n, 40 * r0)
    p = ScalarField(g, np.exp(-4 * g.r / r0))
    u = osmotic_velocity(p, 1.0, 0.0)
    return g, p, ComplexVelocityField(VectorField(g, np.zeros_like(u.values)), u, mu)


def harmonic_state(mu, omega=1.0, n=2000):
    # p ~ exp(-omega r^2) with m = sigma = 1, so u = -omega x
    g = RadialGrid.uniform(n, 8.0)
    p = ScalarField(g, np.exp(-omega * g.r ** 2))
    u = osmotic_velocity(p, 1.0, 0.0)
    return g, p, ComplexVelocityField(VectorField(g, np.zeros_like(u.values)), u, mu)


def test_problem_validation():
    with pytest.raises(ConfigError, match="homogeneous"):
        StochasticNewtonProblem(Potential.kepler(1.0), 1.0, 1.0, gamma=2.0)
    with pytest.raises(ConfigError):
        StochasticNewtonProblem(Potential.kepler(1.0), 1.0, 1.0, alpha=0)
    assert StochasticNewtonProblem(Potential.harmonic(1.0), 1.0, 0.0).gamma == 2.0


def test_region_mask():
    g = RadialGrid.uniform(10, 10.0)
    assert region_mask(g, (2.0, 4.0)).sum() == 3
    assert region_mask(g).all()


@pytest.mark.parametrize("mu", MUS)
def test_newton_on_kepler_stationary_state(mu):
    g, p, vel = kepler_state(mu)
    prob = StochasticNewtonProblem(Potential.kepler(1.0), 1.0, 1.0, mu, 1)
    rep = newton_residual(prob, [vel, vel], [0.0, 1.0], region=(1.0, 20.0))
    assert rep.passed and rep.value < 1e-4


@pytest.mark.parametrize("mu", MUS)
def test_harmonic_ground_state_solves_only_alpha_plus(mu):
    g, p, vel = harmonic_state(mu)
    U = Potential.harmonic(1.0)
    plus = newton_residual(StochasticNewtonProblem(U, 1.0, 1.0, mu, 1), [vel, vel], [0.0, 1.0], region=(0.0, 4.0))
    minus = newton_residual(StochasticNewtonProblem(U, 1.0, 1.0, mu, -1), [vel, vel], [0.0, 1.0], region=(0.0, 4.0))
    assert plus.value < 1e-4
    assert minus.value > 0.5 and not minus.passed


@pytest.mark.parametrize("mu", MUS)
def test_strong_virial_on_analytic_states(mu):
    for (g, p, vel), U, region in (
        (kepler_state(mu), Potential.kepler(1.0), (1.0, 20.0)),
        (harmonic_state(mu), Potential.harmonic(1.0), (0.1, 4.0)),
    ):
        rep = strong_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, 1), [vel, vel], [0.0, 1.0], region=region)
        assert rep.passed and rep.value < 1e-4
        assert rep.meta["equilibrium_identity_gap"] < 1e-4


def test_strong_virial_without_noise_is_classical():
    # trajectories x = A cos(omega t) form the flow v(x, t) = -omega x tan(omega t);
    # d^2/dt^2 (m x^2) = 2 m v^2 - 2 m omega^2 x^2 = 4K - 2 gamma U with gamma = 2
    omega = 1.3
    g = CartesianGrid.uniform(-2.0, 2.0, 81)
    x = g.axes[0]
    times = np.array([0.3, 0.3 + 1e-4, 0.3 + 2e-4])
    vels = []
    for t in times:
        v = VectorField(g, (-omega * x * math.tan(omega * t))[:, None])
        vels.append(ComplexVelocityField(v, VectorField(g, np.zeros_like(v.values)), -1))
    prob = StochasticNewtonProblem(Potential.harmonic(omega ** 2), 1.0, 0.0)
    assert newton_residual(prob, vels, times, index=1, region=(0.2, 1.8)).value < 1e-3
    assert strong_virial(prob, vels, times, index=1, region=(0.2, 1.8)).value < 1e-3


def test_induced_potential_of_gaussian():
    # sqrt(p) = exp(-r^2 / (4 s^2)): lap sqrt(p) / sqrt(p) = r^2 / (4 s^4) - 3 / (2 s^2)
    s, m, sigma = 0.7, 2.0, 0.9
    g = RadialGrid.uniform(3000, 6.0)
    p = ScalarField(g, np.exp(-g.r ** 2 / (2 * s ** 2)))
    exact = -0.5 * m * sigma ** 4 * (g.r ** 2 / (4 * s ** 4) - 1.5 / s ** 2)
    sel = g.r < 4.0
    scale = np.max(np.abs(exact[sel]))
    assert np.max(np.abs(induced_potential(p, m, sigma, 0.0).values - exact)[sel]) < 1e-4 * scale
    jet = induced_potential_jet(ScalarField(g, p.values).to_jet(), m, sigma)
    assert np.max(np.abs(jet - exact)[sel]) < 1e-4 * scale


def random_density(a, b, c, k):
    pts = np.linspace(-2.0, 2.0, 41)[:, None]
    (x,) = jets.coordinates(pts)
    return jets.exp(x * x * (-a) + x * b + jets.exp(x * k * 0.5) * c), x


@settings(max_examples=100)
@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(-0.5, 0.5), st.floats(-2.0, 2.0),
       st.floats(0.1, 3.0), st.floats(0.1, 2.0), st.sampled_from(MUS))
def test_hj_forms_agree_on_random_densities(a, b, c, k, m, sigma, mu):
    p, x = random_density(a, b, c, k)
    S = x * x * 0.3 + x * b
    res = hamilton_jacobi_residuals(S, p, x * x, m, sigma, mu)
    scale = max(np.max(np.abs(res.hj_field_root)), np.max(np.abs(res.hj_field)))
    assert np.max(np.abs(res.hj_field - res.hj_field_root)) <= 1e-8 * scale


def test_hj_on_harmonic_ground_state():
    # p ~ exp(-r^2), U = r^2 / 2, m = sigma = 1: U + U_induced = 3/2 = E0
    g = RadialGrid.uniform(2000, 6.0)
    p = ScalarField(g, np.exp(-g.r ** 2))
    S = ScalarField(g, np.zeros(g.shape))
    U = Potential.harmonic(1.0)
    ok = hamilton_jacobi_residuals(S, p, U, 1.0, 1.0, mode="energy_offset", energy=1.5, region=(0.1, 4.0))
    assert ok.hj.passed and ok.continuity.passed
    # on a grid the two forms differ only by discretization error
    assert ok.forms_gap < 1e-4
    zero = hamilton_jacobi_residuals(S, p, U, 1.0, 1.0, mode="zero", region=(0.1, 4.0))
    assert not zero.hj.passed
    with pytest.raises(ConfigError):
        hamilton_jacobi_residuals(S, p, U, 1.0, 1.0, mode="energy_offset")


def test_continuity_detects_flux():
    g = CartesianGrid.uniform(-3.0, 3.0, 121)
    x = g.axes[0]
    p = ScalarField(g, np.exp(-x ** 2))
    S = ScalarField(g, x.copy())
    res = hamilton_jacobi_residuals(S, p, np.zeros(121), 1.0, 1.0, region=(0.0, 2.5))
    # div(p grad S) = p' = -2 x p, not zero
    assert not res.continuity.passed
    assert np.allclose(res.continuity_field[5:-5], (-2 * x * p.values)[5:-5], atol=2e-3)


def test_classical_virial_on_circular_orbit():
    # 2K = gamma U on average: G M m / R on both sides for a circular Kepler orbit
    R, gm = 3.0, 2.0
    th = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    pos = R * np.stack([np.cos(th), np.sin(th), 0 * th], axis=1)
    speed = math.sqrt(gm / R)
    vel = speed * np.stack([-np.sin(th), np.cos(th), 0 * th], axis=1)
    two_k, gamma_u = classical_virial_average(pos, vel, Potential.kepler(gm), 1.0)
    assert two_k == pytest.approx(gamma_u, rel=1e-12)


@pytest.fixture(scope="module")
def ou_stationary():
    return harmonic_ensemble(200_000, 5)


def ou_model(omega=1.0):
    return VelocityModel(lambda x, t: np.zeros_like(x), lambda x, t: -omega * x)


@pytest.mark.parametrize("mu", MUS)
def test_weak_virial_corrected_sign_holds(ou_stationary, mu):
    prob = StochasticNewtonProblem(Potential.harmonic(1.0), 1.0, 1.0, mu, 1)
    rep = weak_virial(prob, ou_stationary, ou_model(), correction_sign=-1, seed=1)
    assert rep.passed


@pytest.mark.parametrize("mu", MUS)
def test_weak_virial_other_signs_are_rejected(ou_stationary, mu):
    # E(2K - 2U) = -1 here, so the literal alpha = -1 and + sign forms sit far outside the band
    U = Potential.harmonic(1.0)
    literal = weak_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, 1), ou_stationary, ou_model(), correction_sign=1, seed=1)
    minus = weak_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, -1), ou_stationary, ou_model(), seed=1)
    assert not literal.passed and not minus.passed
    assert minus.meta["E_2K_minus_gammaU"].real == pytest.approx(-1.0, abs=0.02)


def test_weak_virial_needs_neighbours(ou_stationary):
    prob = StochasticNewtonProblem(Potential.harmonic(1.0), 1.0, 1.0)
    with pytest.raises(ConfigError):
        weak_virial(prob, ou_stationary, ou_model(), t=0)


@pytest.mark.parametrize("mu", MUS)
def test_noether_rotating_packet(mu):
    ens, model = rotating_harmonic_ensemble(50_000, 3)
    rep = noether_angular_momentum(ens, lag=4, model=model, mu=mu)
    assert rep.passed
    assert np.mean(rep.meta["L_path"]) == pytest.approx(16.0, rel=0.02)
    # the complex identity holds in expectation; what remains is Monte Carlo noise
    assert rep.meta["identity_relative"] < 0.03


def test_noether_needs_two_dimensions(ou_stationary):
    with pytest.raises(ConfigError):
        noether_angular_momentum(ou_stationary)


@pytest.fixture(scope="module")
def kepler_stationary():
    cfg = RunConfig(subcommand="verify", seed=4, paths=40_000)
    return kepler_ensemble(cfg)


def test_kepler_stationary_transport(kepler_stationary):
    ens, spec, model = kepler_stationary
    r0 = model.r0
    grid = RadialGrid.uniform(120, 6 * r0)
    res = fokker_planck_residual(ens, grid, spec.sigma, drift=spec.drift, bandwidth=0.15 * r0, region=(0.25 * r0, 5 * r0))
    for rep in (res.forward, res.backward, res.continuity):
        assert rep.passed, rep.to_dict()
    cont = continuity_residual(ens, grid, bandwidth=0.15 * r0, region=(0.25 * r0, 5 * r0))
    assert cont.passed


def test_transport_flags_wrong_drift(kepler_stationary):
    # a drift twice too strong breaks the forward balance
    ens, spec, model = kepler_stationary
    r0 = model.r0
    grid = RadialGrid.uniform(120, 6 * r0)
    wrong = lambda x, t: 2.0 * spec.drift(x, t)  # noqa: E731
    res = fokker_planck_residual(ens, grid, spec.sigma, drift=wrong, bandwidth=0.15 * r0, region=(0.25 * r0, 5 * r0))
    assert not res.forward.passed


def test_report_serialization():
    rep = ResidualReport("x", 0.5, "sup", 1.0, True, band=(-1.0, 1.0), meta={"z": complex(1, 2)})
    d = rep.to_dict()
    assert d["pass"] is True and d["band"] == [-1.0, 1.0]
    assert '"name": "x"' in rep.to_json()


def test_solver_state_suites():
    cfg = RunConfig(subcommand="verify", seed=1, grid_n=2048)
    state = stationary_state(cfg)
    for mu in MUS:
        vel = state.velocity.with_mu(mu)
        prob = StochasticNewtonProblem(state.potential, 1.0, state.sigma, mu, 1)
        assert newton_residual(prob, [vel, vel], [0, 1], region=state.region).passed
        assert strong_virial(prob, [vel, vel], [0, 1], region=state.region).passed
