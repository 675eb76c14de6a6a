"""End-to-end acceptance criteria 1-13.

Each test records one line in ``ACCEPTANCE_LINES`` (printed in the terminal
summary) before asserting.  Every stochastic or sign-dependent check runs
for both mu = +1 and mu = -1.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES
from nelsonlab import jets
from nelsonlab.config import RunConfig
from nelsonlab.fields import CartesianGrid, RadialGrid, ScalarField
from nelsonlab.kepler import (
    KeplerModel,
    galaxy_scan,
    ground_state_density,
    kepler_potential,
    milky_way_estimate,
    round_sig,
    total_potential,
)
from nelsonlab.nelson import empirical_nelson, stochastic_derivative
from nelsonlab.potentials import Potential
from nelsonlab.schrodinger import ground_state
from nelsonlab.sde import DiffusionSpec, DriftField, Gaussian, simulate
from nelsonlab.suites import (
    harmonic_ensemble,
    kepler_ensemble,
    rotating_harmonic_ensemble,
    stationary_state,
    suite_reality,
)
from nelsonlab.verify import (
    StochasticNewtonProblem,
    VelocityModel,
    fokker_planck_residual,
    hamilton_jacobi_residuals,
    induced_potential,
    noether_angular_momentum,
    strong_virial,
    weak_virial,
)

MUS = (1, -1)
NAT = KeplerModel.natural()


def record(number, passed, detail):
    ACCEPTANCE_LINES.append((number, bool(passed), detail))
    assert passed, detail


def test_criterion_01_induced_potential_closed_form():
    start = time.perf_counter()
    grid = RadialGrid.uniform(4096, 40 * NAT.r0)
    p = ScalarField(grid, np.exp(-4 * grid.r / NAT.r0)).normalized()
    num = induced_potential(p, NAT.m, NAT.sigma, floor=0.0).values
    elapsed = time.perf_counter() - start
    sel = (grid.r >= 0.5 * NAT.r0) & (grid.r <= 10 * NAT.r0)
    exact = -NAT.energy_scale * (1 - NAT.r0 / grid.r[sel])
    err = float(np.max(np.abs(num[sel] - exact))) / NAT.energy_scale
    record(1, err < 1e-3 and elapsed < 1.0, f"relative error {err:.2e} (< 1e-3), {elapsed:.3f} s (< 1 s)")


def test_criterion_02_flat_total_potential():
    models = [NAT, KeplerModel(2.0, 3.0, 0.7, 1.5), KeplerModel.from_v0(4.3e-6, 1e10, 144.0, units="galactic")]
    closed = 0.0
    for model in models:
        r = model.r0 * np.geomspace(0.01, 100.0, 400)
        closed = max(closed, float(np.max(np.abs(total_potential(model, r) / model.energy_scale + 1.0))))
    grid = RadialGrid.uniform(4096, 40 * NAT.r0)
    p = ScalarField(grid, ground_state_density(NAT, grid.r))
    total = kepler_potential(NAT, grid.r) + induced_potential(p, NAT.m, NAT.sigma, floor=0.0).values
    sel = (grid.r >= 0.5 * NAT.r0) & (grid.r <= 10 * NAT.r0)
    route = float(np.max(np.abs(total[sel] + NAT.energy_scale))) / NAT.energy_scale
    record(2, closed < 1e-12 and route < 1e-3, f"closed form {closed:.1e} (< 1e-12), grid route {route:.2e} (< 1e-3)")


def test_criterion_03_schrodinger_ground_state():
    model = KeplerModel(1.0, 1.0, 1.0)
    start = time.perf_counter()
    grid = RadialGrid.uniform(4096, 40 * model.r0)
    gs = ground_state(Potential.kepler(model.gmm), model.m, model.sigma, grid)
    elapsed = time.perf_counter() - start
    e_rel = abs(gs.energy / -model.energy_scale - 1.0)
    # |psi|^2 = p ~ exp(-4 r / r0), so |psi| ~ exp(-2 r / r0)
    exact = np.sqrt(ground_state_density(model, grid.r))
    l2 = math.sqrt(grid.integrate((np.abs(gs.psi.psi) - exact) ** 2))
    record(3, e_rel < 1e-3 and l2 < 1e-3 and elapsed < 10.0,
           f"E0 relative error {e_rel:.2e} (< 1e-3), L2 {l2:.2e} (< 1e-3), {elapsed:.2f} s (< 10 s)")


def test_criterion_04_galaxy_numbers():
    rows = galaxy_scan()
    scaling = all(round_sig(e.r0_kpc, 2) == round_sig(4.1 * 10.0 ** (p - 10), 2) for e, p in zip(rows, range(8, 13)))
    low = round_sig(rows[0].r0_kpc * 1e3, 2)
    high = round_sig(rows[-1].r0_kpc, 2)
    ok = scaling and low == 41.0 and high == 410.0 and all(e.v0_kms == 144.0 for e in rows)
    record(4, ok, f"r0 = 4.1e(p-10) kpc for p = 8..12: {scaling}; endpoints {low:g} pc, {high:g} kpc")


def test_criterion_05_milky_way():
    est = milky_way_estimate()
    formula = 2 * 4.3e-6 * 8e10 / 220.0 ** 2
    ok = (
        abs(est.r0_kpc / formula - 1) < 1e-12
        and round_sig(est.r0_kpc, 3) == 14.2
        and est.quoted["r0_kpc"] == 8.0
        and est.flags["r0_match"] is False
    )
    record(5, ok, f"2GM/v0^2 = {est.r0_kpc:.2f} kpc, quoted {est.quoted['r0_kpc']:g} kpc, mismatch flagged")


def test_criterion_06_nelson_estimator_fidelity():
    start = time.perf_counter()
    ens = harmonic_ensemble(1_000_000, 11, dt=0.02, steps=40)
    grid = CartesianGrid.uniform(-2.0, 2.0, 81)
    pair = empirical_nelson(ens, ens.times[20], grid, window=1, bandwidth=0.2, degree=1, pool=19)
    x = grid.axes[0]
    scale = float(np.max(np.abs(x)))
    fwd = float(np.max(np.abs(pair.forward.values[:, 0] + x))) / scale
    bwd = float(np.max(np.abs(pair.backward.values[:, 0] - x))) / scale
    errs = []
    for mu in MUS:
        c = stochastic_derivative(pair, mu)
        errs.append(float(np.max(np.abs(c.current.values[:, 0]))) / scale)
        errs.append(float(np.max(np.abs(c.osmotic.values[:, 0] + x))) / scale)
    elapsed = time.perf_counter() - start
    ok = max(fwd, bwd, *errs) < 0.05 and elapsed < 60.0
    record(6, ok, f"D+ {fwd:.2%}, D- {bwd:.2%}, v/u over mu=+-1 {max(errs):.2%} (< 5%), {elapsed:.1f} s (< 60 s)")


def test_criterion_07_weak_virial():
    ens = harmonic_ensemble(200_000, 7)
    model = VelocityModel(lambda x, t: np.zeros_like(x), lambda x, t: -x)
    U = Potential.harmonic(1.0)
    parts = []
    ok = True
    for mu in MUS:
        minus = weak_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, -1), ens, model, seed=7)
        lo, hi = minus.meta["band_E_2K_minus_gammaU"]
        zero_in_band = lo.real <= 0 <= hi.real and lo.imag <= 0 <= hi.imag
        plus = weak_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, 1), ens, model, correction_sign=1, seed=7)
        # reported only: the same check with the opposite sign on the correction
        flipped = weak_virial(StochasticNewtonProblem(U, 1.0, 1.0, mu, 1), ens, model, correction_sign=-1, seed=7)
        ok = ok and zero_in_band and plus.passed
        parts.append(f"mu={mu:+d}: E(2K-2U) = {minus.meta['E_2K_minus_gammaU'].real:.3f}, "
                     f"zero in band {zero_in_band}, alpha=+1 correction matches {plus.passed} "
                     f"(opposite sign {flipped.passed})")
    record(7, ok, "; ".join(parts))


def test_criterion_08_strong_virial():
    cfg = RunConfig(subcommand="verify", seed=1, grid_n=4096)
    state = stationary_state(cfg)
    values = []
    for mu in MUS:
        vel = state.velocity.with_mu(mu)
        prob = StochasticNewtonProblem(state.potential, state.m, state.sigma, mu, 1)
        values.append(strong_virial(prob, [vel, vel], [0.0, 1.0], region=state.region).value)
    record(8, max(values) < 1e-2, f"relative residual {max(values):.2e} over mu=+-1 (< 1e-2)")


def _random_density(a, b, c, k):
    pts = np.linspace(-2.0, 2.0, 41)[:, None]
    (x,) = jets.coordinates(pts)
    return jets.exp(x * x * (-a) + x * b + jets.exp(x * k * 0.5) * c), x


def test_criterion_09_hj_forms():
    worst = [0.0]
    count = [0]

    @settings(max_examples=100, database=None)
    @given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(-0.5, 0.5), st.floats(-2.0, 2.0),
           st.floats(0.1, 3.0), st.floats(0.1, 2.0), st.sampled_from(MUS))
    def check(a, b, c, k, m, sigma, mu):
        p, x = _random_density(a, b, c, k)
        S = x * x * 0.3 + x * b
        res = hamilton_jacobi_residuals(S, p, x * x, m, sigma, mu)
        scale = max(np.max(np.abs(res.hj_field_root)), np.max(np.abs(res.hj_field)))
        gap = float(np.max(np.abs(res.hj_field - res.hj_field_root))) / scale
        worst[0] = max(worst[0], gap)
        count[0] += 1
        assert gap <= 1e-8

    try:
        check()
        passed = True
    except AssertionError:
        passed = False
    record(9, passed, f"{count[0]} random densities, worst relative gap {worst[0]:.1e} (< 1e-8)")


def test_criterion_10_continuity_and_fokker_planck():
    cfg = RunConfig(subcommand="verify", seed=4, paths=40_000)
    ens, spec, model = kepler_ensemble(cfg)
    r0 = model.r0
    res = fokker_planck_residual(ens, RadialGrid.uniform(120, 6 * r0), spec.sigma, drift=spec.drift,
                                 bandwidth=0.15 * r0, region=(0.25 * r0, 5 * r0), seed=4)
    cont = res.continuity
    in_band = cont.meta["sup_t"] <= cont.meta["critical"]
    del ens

    ou = DiffusionSpec(DriftField.linear(1.0, 1), 1.0, Gaussian((2.0,), 0.1))
    ens = simulate(ou, np.arange(0, 0.8001, 0.01), 1_000_000, 11)
    fp = fokker_planck_residual(ens, CartesianGrid.uniform(-3.0, 5.0, 161, 1), 1.0, drift=ou.drift, t=0.5, lag=4, bandwidth=0.2)
    rel = {r.name: r.value for r in (fp.forward, fp.backward, fp.continuity)}
    ok = in_band and all(v < 0.05 for v in rel.values())
    record(10, ok, f"Kepler continuity sup-t {cont.meta['sup_t']:.2f} vs 99% critical {cont.meta['critical']:.2f}; "
                   f"OU relaxation forward {rel['fokker-planck-forward']:.1%}, backward {rel['fokker-planck-backward']:.1%}, "
                   f"continuity {rel['continuity']:.1%} (< 5%)")


def test_criterion_11_angular_momentum():
    ens, model = rotating_harmonic_ensemble(200_000, 12)
    drifts = [noether_angular_momentum(ens, lag=4, model=model, mu=mu).value for mu in MUS]
    del ens
    still, _ = rotating_harmonic_ensemble(2000, 12, radius=0.0)
    zero_model = VelocityModel(lambda x, t: np.zeros_like(x), lambda x, t: -x)
    zeros = [float(np.max(np.abs(noether_angular_momentum(still, lag=4, model=zero_model, mu=mu).meta["L_model"])))
             for mu in MUS]
    ok = max(drifts) < 0.02 and max(zeros) == 0.0
    record(11, ok, f"relative drift of E(X^v) {max(drifts):.2%} (< 2%), zero-rotation L {max(zeros):g}")


def test_criterion_12_reality_diagnostic():
    (grad,) = suite_reality(RunConfig(subcommand="verify", seed=1, drift="gradient"))
    (rot,) = suite_reality(RunConfig(subcommand="verify", seed=1, drift="rotation"))
    ok = grad.passed and not rot.passed and rot.meta["sup_curl"] > 0
    record(12, ok, f"gradient defect {grad.value:.1e} passes: {grad.passed}; "
                   f"rotation fails: {not rot.passed} with curl {rot.meta['sup_curl']:.2f}")


def _cli(args, out, threads):
    env = dict(os.environ)
    for name in ("NUMBA_NUM_THREADS", "OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env.pop(name, None)
        if threads is not None:
            env[name] = str(threads)
    cmd = [sys.executable, "-m", "nelsonlab.cli", *args, "--out", str(out)]
    return subprocess.run(cmd, env=env, capture_output=True, text=True).returncode


def _same_outputs(a, b):
    names = sorted(p.name for p in a.iterdir())
    if names != sorted(p.name for p in b.iterdir()):
        return False
    for name in names:
        if name == "effective_config.json":
            ja, jb = json.loads((a / name).read_text()), json.loads((b / name).read_text())
            ja.pop("out"), jb.pop("out")
            if ja != jb:
                return False
        elif (a / name).read_bytes() != (b / name).read_bytes():
            return False
    return True


def test_criterion_13_determinism(tmp_path):
    runs = {
        "simulate": ["simulate", "--seed", "21", "--paths", "3000"],
        "density": ["density", "--seed", "21", "--paths", "3000"],
        "verify": ["verify", "--seed", "21", "--paths", "4000", "--suite", "continuity"],
    }
    same = {}
    for name, args in runs.items():
        a, b = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        codes = (_cli(args, a, 1), _cli(args, b, None))
        same[name] = codes[0] in (0, 2) and codes == (codes[0],) * 2 and _same_outputs(a, b)
    record(13, all(same.values()), ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items())
           + " (one thread vs default)")
