"""``nelsonlab`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 numerical failure.  Every subcommand writes its outputs plus an
``effective_config.json`` into ``--out``; reruns with the same config and seed
produce identical files.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import kepler, suites
from .config import RunConfig, build_config
from .errors import ConfigError, NumericalError
from .fields import RadialGrid, ScalarField, estimate_density
from .io import write_csv, write_json
from .schrodinger import density_from_wavefunction, ground_state
from .sde import PathEnsemble
from .verify import induced_potential

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [run] and [constants] sections")
    p.add_argument("--units", choices=["natural", "galactic", "si"])
    p.add_argument("--mass", type=float, help="central mass (solar masses in galactic units)")
    p.add_argument("--test-mass", dest="m", type=float, help="test mass m")
    p.add_argument("--sigma", type=float, help="noise amplitude (exclusive with --v0)")
    p.add_argument("--v0", type=float, help="flat rotation speed; sigma^2 = G M / v0")
    p.add_argument("--p-exponent", dest="p_exponent", type=int, help="central mass 10^p")
    p.add_argument("--potential", choices=["kepler", "harmonic"])
    p.add_argument("--strength", type=float, help="spring constant for the harmonic potential")
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--r-max", dest="r_max", type=float, help="grid extent in units of r0")
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--dt", type=float, help="time step in units of r0^2 / sigma^2")
    p.add_argument("--seed", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--method", choices=["inverse", "imaginary-time"])
    p.add_argument("--out", help="output directory")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nelsonlab", description="Stochastic Newton equation toolkit")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name, helptext in (
        ("simulate", "simulate the stationary ensemble of the ground state"),
        ("density", "kernel density estimate from an ensemble"),
        ("schrodinger", "solve for the ground state"),
        ("induced-potential", "induced potential of the ground-state density"),
        ("pipeline", "ground state, density, induced potential, sigma identification"),
        ("verify", "run residual checks"),
        ("galaxy-estimate", "galactic r0 and sigma estimates"),
        ("curves", "potential and rotation curves"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name == "verify":
            p.add_argument("--suite", help="newton | virial-strong | virial-weak | hj | continuity | noether | reality | all")
            p.add_argument("--drift", choices=["gradient", "rotation"], help="drift for the reality suite")
        if name == "density":
            p.add_argument("--ensemble", help="ensemble file written by 'simulate'")
        if name == "galaxy-estimate":
            p.add_argument("--milky-way", dest="milky_way", action="store_true", help="use the Milky Way preset")
    return parser


# ---------------------------------------------------------------- subcommands

def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    write_json(path / "effective_config.json", cfg.effective())
    return path


def _ground(cfg: RunConfig):
    U = suites.potential_for(cfg)
    sigma = suites.noise_level(cfg)
    grid, region = suites.radial_grid(cfg)
    try:
        gs = ground_state(U, cfg.m, sigma, grid, method=cfg.method)
    except NumericalError as exc:
        raise NumericalError(f"stage ground-state: {exc}", exc.residual) from exc
    return U, sigma, grid, region, gs


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out(cfg)
    if cfg.potential == "kepler":
        ens, _, model = suites.kepler_ensemble(cfg)
        expected_mean_r = 0.75 * model.r0
    else:
        omega = math.sqrt(cfg.strength / cfg.m)
        sigma = suites.noise_level(cfg)
        ens = suites.harmonic_ensemble(cfg.paths, cfg.seed, omega, sigma, cfg.dt, cfg.steps, dim=3)
        expected_mean_r = math.sqrt(sigma ** 2 / omega) * 2.0 / math.sqrt(math.pi)
    ens.save_binary(out / "ensemble.bin")
    radius = np.linalg.norm(ens.paths, axis=2)
    write_csv(out / "moments.csv", ["t", "mean_r", "mean_r2"], [ens.times, radius.mean(axis=0), (radius ** 2).mean(axis=0)])
    write_json(out / "summary.json", {
        "paths": ens.n_paths,
        "times": ens.times.size,
        "seed": cfg.seed,
        "mean_r_final": float(radius[:, -1].mean()),
        "mean_r_stationary": expected_mean_r,
        "meta": ens.meta,
    })
    return EXIT_OK


def cmd_density(cfg: RunConfig) -> int:
    out = _out(cfg)
    if cfg.ensemble:
        ens = PathEnsemble.load_binary(cfg.ensemble)
    else:
        ens, _, _ = suites.kepler_ensemble(cfg)
    model = cfg.kepler_model() if cfg.potential == "kepler" else None
    scale = model.r0 if model else 1.0
    grid = RadialGrid.uniform(400, 8.0 * scale)
    est = estimate_density(ens, ens.times[-1], grid, cfg.bandwidth)
    cols = {"r": grid.r, "p_estimate": est.values}
    summary = {"paths": ens.n_paths, "t": float(ens.times[-1])}
    if model:
        exact = kepler.ground_state_density(model, grid.r)
        cols["p_exact"] = exact
        summary["l1_error"] = float(grid.integrate(np.abs(est.values - exact)))
    write_csv(out / "density.csv", list(cols), list(cols.values()))
    write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_schrodinger(cfg: RunConfig) -> int:
    out = _out(cfg)
    U, sigma, grid, region, gs = _ground(cfg)
    gs.psi.export_csv(out / "wavefunction.csv")
    summary = {"energy": gs.energy, "residual": gs.residual, "iterations": gs.iterations, "method": gs.method, "sigma": sigma}
    if cfg.potential == "kepler":
        model = cfg.kepler_model()
        summary["energy_closed_form"] = -model.energy_scale
        summary["energy_relative_error"] = abs(gs.energy / -model.energy_scale - 1.0)
    write_json(out / "summary.json", summary)
    return EXIT_OK


def _induced_tables(cfg: RunConfig, U, sigma, grid, region, gs):
    p = density_from_wavefunction(gs.psi)
    ind = induced_potential(p, cfg.m, sigma, floor=0.0).values
    u_val = U.on_grid(grid).values
    total = u_val + ind
    sel = (grid.r >= region[0]) & (grid.r <= region[1])
    return p, ind, u_val, total, sel


def cmd_induced_potential(cfg: RunConfig) -> int:
    out = _out(cfg)
    U, sigma, grid, region, gs = _ground(cfg)
    p, ind, u_val, total, sel = _induced_tables(cfg, U, sigma, grid, region, gs)
    write_csv(out / "induced_potential.csv", ["r", "U", "U_induced", "U_total"], [grid.r, u_val, ind, total])
    summary = {"U_total_mean": float(np.mean(total[sel])), "U_total_spread": float(np.ptp(total[sel])), "region": list(region)}
    if cfg.potential == "kepler":
        model = cfg.kepler_model()
        closed = kepler.kepler_induced_potential(model, grid.r[sel])
        summary["max_error_over_scale"] = float(np.max(np.abs(ind[sel] - closed)) / model.energy_scale)
    write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig) -> int:
    out = _out(cfg)
    U, sigma, grid, region, gs = _ground(cfg)
    gs.psi.export_csv(out / "step1_wavefunction.csv")
    p, ind, u_val, total, sel = _induced_tables(cfg, U, sigma, grid, region, gs)
    if not np.all(np.isfinite(total[sel])):
        raise NumericalError("stage induced-potential: non-finite values in the assessment region")
    p.export_csv(out / "step2_density.csv", "p")
    write_csv(out / "step3_induced_potential.csv", ["r", "U", "U_induced", "U_total"], [grid.r, u_val, ind, total])
    summary = {
        "potential": cfg.potential,
        "units": cfg.units,
        "sigma": sigma,
        "ground_state_energy": gs.energy,
        "ground_state_residual": gs.residual,
        "U_total_numeric_mean": float(np.mean(total[sel])),
        "U_total_numeric_spread": float(np.ptp(total[sel])),
        "region": list(region),
    }
    if cfg.potential == "kepler":
        model = cfg.kepler_model()
        summary.update({
            "G": model.G,
            "M": model.M,
            "m": model.m,
            "r0": model.r0,
            "v0": kepler.flat_rotation_speed(model),
            "U_total": -model.energy_scale,
            "sigma_identification": {
                "v0_given": cfg.v0,
                "sigma2": model.sigma ** 2,
                "G_M_over_v0": model.gm / model.v0,
            },
        })
    else:
        omega = math.sqrt(cfg.strength / cfg.m)
        closed = -0.5 * cfg.m * omega ** 2 * grid.r ** 2 + 1.5 * cfg.m * sigma ** 2 * omega
        summary["induced_closed_form_max_error"] = float(np.max(np.abs(ind[sel] - closed[sel])))
        summary["U_total"] = 1.5 * cfg.m * sigma ** 2 * omega
    write_json(out / "step4_summary.json", summary)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    out = _out(cfg)
    reports = suites.run_suite(cfg, cfg.suite)
    ok = suites.overall_pass(reports)
    bundle = {"suite": cfg.suite, "pass": ok, "reports": [r.to_dict() for r in reports]}
    write_json(out / "verify.json", bundle)
    for r in reports:
        flag = "PASS" if r.passed else "FAIL"
        note = "" if r.meta.get("asserted", True) else " (reported only)"
        print(f"{flag} {r.name}: {r.value:.4g} [{r.norm}, tol {r.tolerance:g}]{note}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_galaxy_estimate(cfg: RunConfig, milky_way: bool = False) -> int:
    out = _out(cfg)
    if milky_way:
        rows = [kepler.milky_way_estimate(cfg.constants)]
    elif cfg.p_exponent is not None or cfg.mass is not None:
        v0 = cfg.v0 if cfg.v0 is not None else kepler.CATALOG_V0_KMS
        rows = [kepler.galaxy_estimate(cfg.central_mass(), v0, cfg.constants, cfg.p_exponent)]
    else:
        v0 = cfg.v0 if cfg.v0 is not None else kepler.CATALOG_V0_KMS
        rows = kepler.galaxy_scan(range(8, 13), v0, cfg.constants) + [kepler.milky_way_estimate(cfg.constants)]
    data = [r.to_dict() for r in rows]
    write_json(out / "galaxy_estimate.json", data)
    for r in rows:
        quoted = r.quoted.get("r0_kpc")
        flag = "" if quoted is None else f"  quoted {quoted:.3g} kpc ({'match' if r.flags.get('r0_match') else 'MISMATCH'})"
        print(f"M={r.mass_msun:.3g} Msun v0={r.v0_kms:g} km/s: r0={r.r0_kpc:.4g} kpc, sigma^2={r.sigma2_kpc_kms:.4g} kpc km/s = {r.sigma2_kpc2_per_s:.4g} kpc^2/s{flag}")
    return EXIT_OK


def cmd_curves(cfg: RunConfig) -> int:
    out = _out(cfg)
    model = cfg.kepler_model()
    r = np.linspace(0.1, 10.0, 100)
    kepler.write_table(out / "potentials.csv", kepler.potential_table(model, r))
    # the flat branch starts at r0, where the induced potential changes sign
    kepler.write_table(out / "rotation.csv", kepler.rotation_table(model, np.linspace(1.0, 10.0, 91) * model.r0))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "schrodinger": cmd_schrodinger,
    "induced-potential": cmd_induced_potential,
    "pipeline": cmd_pipeline,
    "verify": cmd_verify,
    "galaxy-estimate": cmd_galaxy_estimate,
    "curves": cmd_curves,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if not args.subcommand:
            raise UsageError(parser.format_usage().strip())
        flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "milky_way")}
        cfg = build_config(args.subcommand, flags)
        if args.subcommand == "galaxy-estimate":
            return cmd_galaxy_estimate(cfg, getattr(args, "milky_way", False))
        return COMMANDS[args.subcommand](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
