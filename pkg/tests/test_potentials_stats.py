import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelsonlab.errors import ConfigError
from nelsonlab.fields import CartesianGrid, RadialGrid
from nelsonlab.potentials import Potential, homogeneity_defect
from nelsonlab.stats import bootstrap_mean, contains_zero, group_means, sup_t_band


@given(st.floats(0.1, 10.0), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_homogeneity(strength, r, lam):
    k = Potential.kepler(strength)
    h = Potential.harmonic(strength)
    assert k.value(lam * r) == pytest.approx(lam ** -1 * k.value(r), rel=1e-12)
    assert h.value(lam * r) == pytest.approx(lam ** 2 * h.value(r), rel=1e-12)
    # Euler's relation x . grad U = gamma U
    x = np.array([[r, 0.0, 0.0]])
    for pot in (k, h):
        assert float(x[0] @ pot.gradient_at(x)[0]) == pytest.approx(pot.degree * pot.value(r), rel=1e-12)


def test_homogeneity_defect_detects_wrong_degree():
    assert homogeneity_defect(Potential.kepler(1.0), -1.0) < 1e-14
    assert homogeneity_defect(Potential.kepler(1.0), 2.0) > 0.5


def test_jet_matches_closed_form():
    g = RadialGrid.uniform(50, 5.0)
    j = Potential.kepler(2.0).jet(g)
    assert np.allclose(j.val, -2.0 / g.r)
    assert np.allclose(j.grad[:, 0], 2.0 / g.r ** 2)
    # the Coulomb potential is harmonic away from the origin
    assert np.allclose(j.lap, 0.0, atol=1e-12)
    h = Potential.harmonic(3.0).jet(g)
    assert np.allclose(h.lap, 9.0)


def test_force_on_cartesian_grid():
    g = CartesianGrid.uniform(-1.0, 1.0, 5, 2)
    f = Potential.harmonic(2.0).force(g).values
    assert np.allclose(f, -2.0 * g.mesh())


def test_by_name():
    assert Potential.by_name("harmonic", 1.0).degree == 2.0
    with pytest.raises(ConfigError):
        Potential.by_name("yukawa", 1.0)
    with pytest.raises(ConfigError):
        Potential.kepler(-1.0)


def test_group_means_and_band():
    x = np.arange(100.0)
    g = group_means(x, 10)
    assert g.shape == (10,) and g[0] == pytest.approx(4.5)
    band = bootstrap_mean(g, 200, 0.9, seed=1)
    assert band.lower < 49.5 < band.upper
    assert band.estimate == pytest.approx(49.5)


def test_band_coverage():
    # nominal 90% bands should cover the true mean roughly 90% of the time
    rng = np.random.default_rng(0)
    hits = 0
    for rep in range(200):
        groups = rng.normal(size=50)
        hits += bootstrap_mean(groups, 200, 0.9, seed=rep).contains(0.0)
    assert 0.8 < hits / 200 < 0.97


def test_complex_band():
    rng = np.random.default_rng(1)
    g = rng.normal(size=100) + 1j * (5 + rng.normal(size=100))
    band = bootstrap_mean(g, 200, 0.99)
    assert not contains_zero(band)
    assert band.lower.real < 0 < band.upper.real


def test_sup_t_band():
    rng = np.random.default_rng(2)
    null = rng.normal(size=(100, 30))
    assert sup_t_band(null, 300, 0.99).contains_zero
    shifted = null + np.where(np.arange(30) == 7, 1.0, 0.0)
    assert not sup_t_band(shifted, 300, 0.99).contains_zero
    with_nan = null.copy()
    with_nan[:, 3] = np.nan
    band = sup_t_band(with_nan, 100)
    assert np.isnan(band.estimate[3]) and band.contains_zero
