"""Residual checks for the stochastic Newton equation and its consequences.

Every check returns a :class:`ResidualReport`.  Field checks compare a
residual field against a deterministic tolerance on the valid nodes of an
optional region.  Monte Carlo checks additionally carry a bootstrap band and
pass when either the tolerance is met or zero lies inside the band.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import ConfigError
from .fields import (
    DENSITY_FLOOR,
    Grid,
    RadialGrid,
    ScalarField,
    VectorField,
    bohm_operator,
    default_bandwidth,
    divergence,
    gradient,
    kernel_estimate,
    laplacian,
)
from .io import to_json
from .jets import Jet
from .nelson import ChainRuleOperator, ComplexVelocityField, apply_chain_rule, second_derivative
from .potentials import Potential, homogeneity_defect
from .stats import bootstrap_mean, contains_zero, group_means, sup_t_band


@dataclass
class ResidualReport:
    name: str
    value: float
    norm: str
    tolerance: float
    passed: bool
    masked_fraction: float = 0.0
    band: tuple | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "norm": self.norm,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "masked_fraction": self.masked_fraction,
            "meta": self.meta,
        }
        if self.band is not None:
            out["band"] = list(self.band)
        return out

    def to_json(self) -> str:
        return to_json(self.to_dict())


@dataclass(frozen=True)
class StochasticNewtonProblem:
    """m D_{alpha mu} D_mu X = -grad U with U homogeneous of degree ``gamma``."""

    potential: Potential
    m: float
    sigma: float
    mu: int = -1
    alpha: int = 1
    gamma: float | None = None

    def __post_init__(self):
        if self.mu not in (-1, 1) or self.alpha not in (-1, 1):
            raise ConfigError("mu and alpha must each be +1 or -1")
        if not self.m > 0 or not self.sigma >= 0:
            raise ConfigError("m must be positive and sigma non-negative")
        gamma = self.potential.degree if self.gamma is None else self.gamma
        defect = homogeneity_defect(self.potential, gamma)
        if defect > 1e-8:
            raise ConfigError(f"potential {self.potential.name!r} is not homogeneous of degree {gamma} (defect {defect:.3g})")
        object.__setattr__(self, "gamma", float(gamma))


# ---------------------------------------------------------------- helpers

def region_mask(grid: Grid, region=None) -> np.ndarray:
    """Boolean node mask; ``region`` is a (lo, hi) radius range or a mask array."""
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region
    lo, hi = region
    r = grid.r if isinstance(grid, RadialGrid) else np.linalg.norm(grid.mesh(), axis=-1)
    return (r >= lo) & (r <= hi)


def _norms(values: np.ndarray, grid: Grid) -> np.ndarray:
    v = np.abs(values)
    return np.linalg.norm(v, axis=-1) if v.ndim == len(grid.shape) + 1 else v


def _sup_relative(residual: np.ndarray, scale: np.ndarray, grid: Grid, mask: np.ndarray) -> tuple[float, float]:
    """sup |residual| / sup |scale| over valid masked nodes, and the masked fraction."""
    res = _norms(residual, grid)
    ref = _norms(scale, grid)
    ok = mask & np.isfinite(res) & np.isfinite(ref)
    masked = 1.0 - ok.sum() / max(mask.sum(), 1)
    if not ok.any():
        return float("nan"), 1.0
    denom = float(ref[ok].max())
    num = float(res[ok].max())
    return (num / denom if denom > 0 else num), float(masked)


def _report(name: str, value: float, tol: float, masked: float, norm: str, **meta) -> ResidualReport:
    return ResidualReport(name, value, norm, tol, bool(np.isfinite(value) and value < tol), masked, meta=meta)


# ---------------------------------------------------------------- field checks

def newton_residual(problem: StochasticNewtonProblem, velocities: Sequence[ComplexVelocityField], times, index=None, region=None, tolerance: float = 1e-2) -> ResidualReport:
    """sup |m D_{alpha mu} D_mu X + grad U| relative to sup |grad U| on the region."""
    acc = second_derivative(velocities, times, problem.sigma, problem.alpha, index)
    grid = acc.grid
    force = problem.potential.force(grid).values
    res = problem.m * acc.values - force
    rel, masked = _sup_relative(res, force, grid, region_mask(grid, region))
    return _report("newton", rel, tolerance, masked, "sup-relative", alpha=problem.alpha, mu=problem.mu)


def strong_virial_fields(problem: StochasticNewtonProblem, velocities: Sequence[ComplexVelocityField], times, index=None):
    """Both sides of D_mu^2 (m X^2) = 4K - 2 gamma U + 2 i mu m sigma^2 div(D_mu X)."""
    times = np.asarray(times, dtype=float)
    k = len(velocities) // 2 if index is None else index % len(velocities)
    grid = velocities[k].grid
    r2 = grid.r ** 2 if isinstance(grid, RadialGrid) else np.sum(grid.mesh() ** 2, axis=-1)
    g = ScalarField(grid, problem.m * r2)
    first = [apply_chain_rule(ChainRuleOperator(vel, problem.sigma), g).values for vel in velocities]
    if len(first) < 2:
        raise ConfigError("the strong virial check needs at least two time slices")
    d_first = np.gradient(np.stack(first), times, axis=0, edge_order=1)[k]
    vel = velocities[k]
    lhs = apply_chain_rule(ChainRuleOperator(vel, problem.sigma), g.with_values(first[k]), d_first).values
    w = vel.values()
    kinetic = 0.5 * problem.m * np.sum(w * w, axis=-1)
    div_w = divergence(vel.current).values + 1j * vel.mu * divergence(vel.osmotic).values
    U = problem.potential.on_grid(grid).values
    rhs = 4.0 * kinetic - 2.0 * problem.gamma * U + 2j * vel.mu * problem.m * problem.sigma ** 2 * div_w
    return lhs, rhs


def equilibrium_relation(problem: StochasticNewtonProblem, velocity: ComplexVelocityField) -> np.ndarray:
    """m v^2 - gamma U - m (u^2 + sigma^2 div u): the real part of the virial at rest."""
    v, u = velocity.current, velocity.osmotic
    U = problem.potential.on_grid(v.grid).values
    v2 = np.sum(v.values ** 2, axis=-1)
    u2 = np.sum(u.values ** 2, axis=-1)
    return problem.m * v2 - problem.gamma * U - problem.m * (u2 + problem.sigma ** 2 * divergence(u).values)


def strong_virial(problem: StochasticNewtonProblem, velocities: Sequence[ComplexVelocityField], times, index=None, region=None, tolerance: float = 1e-2) -> ResidualReport:
    lhs, rhs = strong_virial_fields(problem, velocities, times, index)
    grid = velocities[0].grid
    mask = region_mask(grid, region)
    rel, masked = _sup_relative(lhs - rhs, rhs, grid, mask)
    k = len(velocities) // 2 if index is None else index % len(velocities)
    eq = equilibrium_relation(problem, velocities[k])
    # at rest (D^2 (m X^2) = 0) the relation vanishes; in general it equals Re(lhs) / 2
    gap, _ = _sup_relative(eq - 0.5 * lhs.real, rhs, grid, mask)
    ok = mask & np.isfinite(eq)
    return _report(
        "virial-strong",
        rel,
        tolerance,
        masked,
        "sup-relative",
        equilibrium_sup=float(np.max(np.abs(eq[ok]))) if ok.any() else float("nan"),
        equilibrium_identity_gap=gap,
    )


def induced_potential(p: ScalarField, m: float, sigma: float, floor: float = DENSITY_FLOOR) -> ScalarField:
    """-(m sigma^4 / 2) lap(sqrt p) / sqrt p."""
    return ScalarField(p.grid, -0.5 * m * sigma ** 4 * bohm_operator(p, floor).values)


def induced_potential_jet(p: Jet, m: float, sigma: float) -> np.ndarray:
    root = jets.sqrt(p)
    return -0.5 * m * sigma ** 4 * root.lap / root.val


# ---------------------------------------------------------------- Hamilton-Jacobi system

@dataclass
class HamiltonJacobiResult:
    hj: ResidualReport
    continuity: ResidualReport
    hj_field: np.ndarray
    hj_field_root: np.ndarray
    continuity_field: np.ndarray
    forms_gap: float


def _hj_pieces(S, p, m: float, sigma: float, mu: int):
    """|grad S|^2, both induced terms, and div(p grad S) for jets or grid fields."""
    if isinstance(S, Jet):
        R = jets.log(p) * (0.5 * m * sigma ** 2)
        grad_s2 = S.grad_sq
        r_form = mu ** 2 * (R.grad_sq / (2.0 * m) + 0.5 * sigma ** 2 * R.lap)
        root = jets.sqrt(p)
        root_form = 0.5 * m * sigma ** 4 * root.lap / root.val
        flux_div = p.dot_grad(S) + p.val * S.lap
        return grad_s2, r_form, root_form, flux_div
    grid = S.grid
    gs = gradient(S).values
    grad_s2 = np.sum(gs ** 2, axis=-1)
    R = ScalarField(grid, 0.5 * m * sigma ** 2 * np.log(p.values))
    gr = gradient(R).values
    r_form = mu ** 2 * (np.sum(gr ** 2, axis=-1) / (2.0 * m) + 0.5 * sigma ** 2 * laplacian(R).values)
    root_form = 0.5 * m * sigma ** 4 * bohm_operator(p, 0.0).values
    flux_div = divergence(VectorField(grid, p.values[..., None] * gs)).values
    return grad_s2, r_form, root_form, flux_div


def hamilton_jacobi_residuals(
    S,
    p,
    U,
    m: float,
    sigma: float,
    mu: int = -1,
    mode: str = "zero",
    energy: float | None = None,
    dpdt=0.0,
    region=None,
    tolerance: float = 1e-3,
    grid: Grid | None = None,
) -> HamiltonJacobiResult:
    """Modified Hamilton-Jacobi and continuity residuals.

        hj   = dS/dt + |grad S|^2 / 2m - mu^2 (|grad R|^2 / 2m + sigma^2 / 2 lap R) + U
             = dS/dt + |grad S|^2 / 2m - (m sigma^4 / 2) lap sqrt(p) / sqrt(p) + U
        cont = m dp/dt + div(p grad S)

    with R = (m sigma^2 / 2) ln p.  ``mode`` fixes dS/dt: "zero", or
    "energy_offset" for a stationary state with phase e^(-i E t / C), where
    dS/dt = -E.  S and p are jets (exact derivatives) or grid fields; U is a
    Potential, a jet, a field or an array.  The hj norm is sup |hj| relative
    to sup |U| on the region.
    """
    if mode == "zero":
        dsdt = 0.0
    elif mode == "energy_offset":
        if energy is None:
            raise ConfigError("energy_offset mode needs the energy")
        dsdt = -energy
    else:
        raise ConfigError(f"unknown mode {mode!r}; use 'zero' or 'energy_offset'")
    grad_s2, r_form, root_form, flux_div = _hj_pieces(S, p, m, sigma, mu)
    if grid is None:
        grid = None if isinstance(S, Jet) else S.grid
    if isinstance(U, Potential):
        Uv = U.jet(grid).val if isinstance(S, Jet) else U.on_grid(grid).values
    elif isinstance(U, Jet):
        Uv = U.val
    else:
        Uv = np.asarray(U.values if isinstance(U, ScalarField) else U, dtype=float)
    base = dsdt + grad_s2 / (2.0 * m) + Uv
    hj = base - r_form
    hj_root = base - root_form
    cont = m * np.asarray(dpdt) + flux_div
    if isinstance(S, Jet):
        mask = np.ones(hj.shape, dtype=bool)
    else:
        mask = region_mask(grid, region)
    ok = mask & np.isfinite(hj) & np.isfinite(hj_root)
    scale = float(np.max(np.abs(Uv[ok]))) if ok.any() else 1.0
    scale = scale if scale > 0 else 1.0
    hj_rel = float(np.max(np.abs(hj_root[ok]))) / scale if ok.any() else float("nan")
    gap = float(np.max(np.abs(hj[ok] - hj_root[ok]))) / scale if ok.any() else float("nan")
    masked = float(1.0 - ok.sum() / max(mask.sum(), 1))
    pmax = float(np.max(np.abs(p.val if isinstance(p, Jet) else p.values)))
    cont_ok = mask & np.isfinite(cont)
    cont_rel = float(np.max(np.abs(cont[cont_ok]))) / max(pmax * scale / max(m, 1e-300), 1e-300) if cont_ok.any() else float("nan")
    return HamiltonJacobiResult(
        _report("hj", hj_rel, tolerance, masked, "sup-relative-to-U", mode=mode, forms_gap=gap),
        _report("continuity", cont_rel, tolerance, masked, "sup-relative", mode=mode),
        hj,
        hj_root,
        cont,
        gap,
    )


# ---------------------------------------------------------------- Monte Carlo checks

@dataclass(frozen=True)
class VelocityModel:
    """Analytic current and osmotic velocities as vectorized callables of (x, t)."""

    current: Callable[[np.ndarray, float], np.ndarray]
    osmotic: Callable[[np.ndarray, float], np.ndarray]


def weak_virial(
    problem: StochasticNewtonProblem,
    ens,
    model: VelocityModel,
    t=None,
    lag: int = 1,
    correction_sign: int = 1,
    n_groups: int = 200,
    n_boot: int = 400,
    level: float = 0.99,
    seed: int = 0,
) -> ResidualReport:
    """d/dt E(X . grad K) against E(2K - gamma U) + correction, with K = m (D_mu X)^2 / 2.

    For alpha = 1 the correction is ``correction_sign`` * i mu E(Cor . grad K),
    Cor = 2u; for alpha = -1 there is none.  The time derivative is a centered
    difference over ``lag`` recorded steps.  Per-path contributions are
    grouped and bootstrapped; the report passes when zero is inside the band.
    """
    k = ens.times.size // 2 if t is None else ens.index(t)
    if k - lag < 0 or k + lag >= ens.times.size:
        raise ConfigError("weak virial needs recorded steps on both sides of t")
    m, mu = problem.m, problem.mu

    def x_dot_gradk(j):
        x = ens.paths[:, j, :]
        tj = ens.times[j]
        w = model.current(x, tj) + 1j * mu * model.osmotic(x, tj)
        return np.sum(x * m * w, axis=1)

    span = ens.times[k + lag] - ens.times[k - lag]
    lhs = (x_dot_gradk(k + lag) - x_dot_gradk(k - lag)) / span
    x = ens.paths[:, k, :]
    tk = ens.times[k]
    v = model.current(x, tk)
    u = model.osmotic(x, tk)
    w = v + 1j * mu * u
    two_k = m * np.sum(w * w, axis=1)
    U = problem.potential(x)
    classical = two_k - problem.gamma * U
    correction = 1j * mu * np.sum(2.0 * u * m * w, axis=1) if problem.alpha == 1 else np.zeros_like(two_k)
    per_path = lhs - classical - correction_sign * correction
    groups = group_means(np.stack([per_path, classical, correction, lhs], axis=1), n_groups)
    band = bootstrap_mean(groups, n_boot, level, seed)
    est = band.estimate
    inside = contains_zero(bootstrap_mean(groups[:, 0], n_boot, level, seed))
    return ResidualReport(
        "virial-weak",
        float(abs(est[0])),
        "abs-mean",
        0.0,
        inside,
        0.0,
        band=(complex(band.lower[0]), complex(band.upper[0])),
        meta={
            "alpha": problem.alpha,
            "mu": mu,
            "correction_sign": correction_sign,
            "d_dt_E_x_gradK": complex(est[3]),
            "E_2K_minus_gammaU": complex(est[1]),
            "correction": complex(est[2]),
            "band_E_2K_minus_gammaU": (complex(band.lower[1]), complex(band.upper[1])),
            "band_correction": (complex(band.lower[2]), complex(band.upper[2])),
            "level": level,
        },
    )


def _wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 2:
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return np.cross(a, b)


def noether_angular_momentum(
    ens,
    lag: int = 1,
    model: VelocityModel | None = None,
    mu: int = -1,
    sigma: float | None = None,
    tolerance: float = 0.02,
) -> ResidualReport:
    """Track L_t = E(X wedge v) and its drift over the run.

    L_t comes from the path estimator E[X_t wedge (X_{t+h} - X_{t-h}) / 2h].
    With an analytic ``model`` the complex identity
    d/dt E(X wedge D_mu X) - i mu sigma^2 E(grad ln p wedge D_mu X) = 0
    is also evaluated, using grad ln p = 2u / sigma^2.
    """
    if ens.dim < 2:
        raise ConfigError("angular momentum needs at least two dimensions")
    idx = np.arange(lag, ens.times.size - lag)
    L = []
    for j in idx:
        span = ens.times[j + lag] - ens.times[j - lag]
        vel = (ens.paths[:, j + lag, :] - ens.paths[:, j - lag, :]) / span
        L.append(np.mean(_wedge(ens.paths[:, j, :], vel), axis=0))
    L = np.array(L)
    L0 = L[0]
    size = float(np.max(np.abs(L0)))
    drift = float(np.max(np.abs(L - L0))) / size if size > 0 else float(np.max(np.abs(L)))
    meta = {"L_path": L.tolist(), "times": ens.times[idx].tolist()}
    if model is not None:
        s = float(ens.meta.get("sigma", 0.0)) if sigma is None else sigma
        ang = []
        for j in range(ens.times.size):
            x = ens.paths[:, j, :]
            w = model.current(x, ens.times[j]) + 1j * mu * model.osmotic(x, ens.times[j])
            ang.append(np.mean(_wedge(x.astype(complex), w), axis=0))
        ang = np.array(ang)
        d_ang = np.gradient(ang, ens.times, axis=0)
        extra = []
        for j in range(ens.times.size):
            x = ens.paths[:, j, :]
            u = model.osmotic(x, ens.times[j])
            w = model.current(x, ens.times[j]) + 1j * mu * u
            extra.append(np.mean(_wedge((2.0 * u).astype(complex), w), axis=0))
        identity = d_ang - 1j * mu * np.array(extra)
        meta["identity_sup"] = float(np.max(np.abs(identity)))
        meta["identity_relative"] = meta["identity_sup"] / size if size > 0 else meta["identity_sup"]
        meta["L_model"] = ang.real.tolist()
        meta["wedge_self"] = float(np.max(np.abs(_wedge(u, u))))
        if s == 0:
            meta["identity_sup"] = float(np.max(np.abs(d_ang)))
    rep = _report("noether", drift, tolerance, 0.0, "max-relative-drift", **meta)
    return rep


def _cartesian_flux(x: np.ndarray, vec: np.ndarray, grid: Grid, bw: float) -> np.ndarray:
    """Kernel estimate of E[delta(x - X) vec] as a vector field (divided by the path count)."""
    n = x.shape[0]
    return np.stack([kernel_estimate(x, grid, bw, values=vec[:, c]) / n for c in range(grid.dim)], axis=-1)


def _density(x: np.ndarray, grid: Grid, bw: float) -> np.ndarray:
    return kernel_estimate(x, grid, bw) / x.shape[0]


@dataclass
class TransportResult:
    forward: ResidualReport
    backward: ResidualReport
    continuity: ResidualReport


def _radial_transport_terms(x0, xm, xp, hf, hb, fwd_vel, grid: RadialGrid, bw: float, sigma: float):
    """Radial-marginal form: q = S r^(d-1) p, mass flux q b - sigma^2 / 2 (q' - (d-1) q / r).

    Kernel smoothing of the marginal commutes with d/dr, and q / r is itself
    a kernel-weighted average (weights 1 / |X|), so no term picks up a
    smoothing bias from the curvature of the shells.
    """
    n = x0.shape[0]
    r0 = np.linalg.norm(x0, axis=1)
    unit = x0 / np.where(r0 > 0, r0, np.inf)[:, None]
    est = lambda pts, vals=None, odd=False: kernel_estimate(pts, grid, bw, values=vals, odd=odd, marginal=True) / n  # noqa: E731
    dr = lambda f: np.gradient(f, grid.r, edge_order=2)  # noqa: E731
    dqdt = (est(xp) - est(xm)) / (hf + hb)
    q = est(x0)
    q_over_r = est(x0, 1.0 / np.where(r0 > 0, r0, np.inf), odd=True)
    flux = lambda vel: est(x0, np.sum(vel * unit, axis=1), odd=True)  # noqa: E731
    div_f = dr(flux(fwd_vel))
    div_b = dr(flux((x0 - xm) / hb))
    div_c = dr(flux((xp - xm) / (hf + hb)))
    diff = 0.5 * sigma ** 2 * (dr(dr(q)) - (grid.dim - 1) * dr(q_over_r))
    return np.stack([dqdt, div_f, div_b, div_c, diff])


def _transport_terms(ens, k: int, lag: int, grid: Grid, bw: float, drift, sigma: float, rows: slice):
    """Per-group pieces of the forward, backward and continuity residuals."""
    xm = ens.paths[rows, k - lag, :]
    x0 = ens.paths[rows, k, :]
    xp = ens.paths[rows, k + lag, :]
    hf = ens.times[k + lag] - ens.times[k]
    hb = ens.times[k] - ens.times[k - lag]
    fwd_vel = drift(x0, ens.times[k]) if drift is not None else (xp - x0) / hf
    if isinstance(grid, RadialGrid):
        return _radial_transport_terms(x0, xm, xp, hf, hb, fwd_vel, grid, bw, sigma)
    dpdt = (_density(xp, grid, bw) - _density(xm, grid, bw)) / (hf + hb)
    p = _density(x0, grid, bw)
    lap = laplacian(ScalarField(grid, p)).values
    bwd_vel = (x0 - xm) / hb
    cur_vel = (xp - xm) / (hf + hb)
    div = lambda vel: divergence(VectorField(grid, _cartesian_flux(x0, vel, grid, bw))).values  # noqa: E731
    return np.stack([dpdt, div(fwd_vel), div(bwd_vel), div(cur_vel), 0.5 * sigma ** 2 * lap])


def _transport_report(name: str, res_groups: np.ndarray, term_groups: list[np.ndarray], mask, tol, n_boot, level, seed) -> ResidualReport:
    res = res_groups.mean(axis=0)
    ok = mask & np.isfinite(res)
    scale = max(float(np.max(np.abs(t.mean(axis=0)[ok]))) for t in term_groups)
    rel = float(np.max(np.abs(res[ok]))) / scale if scale > 0 else float("nan")
    masked = np.where(mask, res_groups, np.nan)
    band = sup_t_band(masked, n_boot, level, seed)
    passed = bool(rel < tol or band.contains_zero)
    return ResidualReport(
        name,
        rel,
        "sup-relative-to-terms",
        tol,
        passed,
        float(1.0 - ok.sum() / max(mask.sum(), 1)),
        band=(-band.crit, band.crit),
        meta={"sup_t": band.sup_t, "critical": band.crit, "level": level, "relative_tolerance_met": bool(rel < tol)},
    )


def fokker_planck_residual(
    ens,
    grid: Grid,
    sigma: float,
    drift=None,
    t=None,
    lag: int = 1,
    bandwidth: float | None = None,
    region=None,
    tolerance: float = 0.05,
    n_groups: int = 100,
    n_boot: int = 400,
    level: float = 0.99,
    seed: int = 0,
) -> TransportResult:
    """Forward and backward Fokker-Planck residuals and their half-sum.

        forward:    dp/dt + div(p D+) - sigma^2 / 2 lap p
        backward:   dp/dt + div(p D-) + sigma^2 / 2 lap p
        continuity: dp/dt + div(p v),  v = (D+ + D-) / 2

    Fluxes are kernel-weighted averages: p D+ uses the known ``drift`` when
    given (else forward increments), p D- backward increments and p v
    centered increments.  Every term is linear in the paths, so group means
    are unbiased and the sup-t band is a bootstrap over groups.  On radial
    grids the same balances are written for the radial marginal S r^(d-1) p
    and its mass flux.
    """
    k = ens.times.size // 2 if t is None else ens.index(t)
    if k - lag < 0 or k + lag >= ens.times.size:
        raise ConfigError("transport residuals need recorded steps on both sides of t")
    bw = default_bandwidth(ens.paths[:, k, :], grid) if bandwidth is None else bandwidth
    n = ens.n_paths
    g = max(2, min(n_groups, n))
    edges = np.linspace(0, n, g + 1).astype(np.int64)
    terms = np.stack([_transport_terms(ens, k, lag, grid, bw, drift, sigma, slice(edges[i], edges[i + 1])) for i in range(g)])
    dpdt, div_f, div_b, div_c, diff = (terms[:, j] for j in range(5))
    mask = region_mask(grid, region)
    fwd = _transport_report("fokker-planck-forward", dpdt + div_f - diff, [dpdt, div_f, diff], mask, tolerance, n_boot, level, seed)
    bwd = _transport_report("fokker-planck-backward", dpdt + div_b + diff, [dpdt, div_b, diff], mask, tolerance, n_boot, level, seed)
    cont = _transport_report("continuity", dpdt + div_c, [dpdt, div_c], mask, tolerance, n_boot, level, seed)
    for rep in (fwd, bwd, cont):
        rep.meta["bandwidth"] = bw
    return TransportResult(fwd, bwd, cont)


def continuity_residual(ens, grid: Grid, t=None, lag: int = 1, bandwidth=None, region=None, tolerance: float = 0.05, n_groups: int = 100, n_boot: int = 400, level: float = 0.99, seed: int = 0) -> ResidualReport:
    """dp/dt + div(p v) from the ensemble alone (see :func:`fokker_planck_residual`)."""
    sigma = float(ens.meta.get("sigma", 0.0))
    return fokker_planck_residual(ens, grid, sigma, None, t, lag, bandwidth, region, tolerance, n_groups, n_boot, level, seed).continuity


def classical_virial_average(positions: np.ndarray, velocities: np.ndarray, potential: Potential, m: float) -> tuple[float, float]:
    """Time averages of 2K and gamma U along a sampled deterministic orbit."""
    two_k = m * np.sum(velocities ** 2, axis=-1)
    return float(np.mean(two_k)), float(potential.degree * np.mean(potential(positions)))
