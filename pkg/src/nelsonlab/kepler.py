"""Closed forms for the stochastic Kepler problem and the flat rotation curve.

For U = -G M m / r the ground-state density is proportional to exp(-4 r / r0)
with r0 = 2 sigma^4 / (G M).  Its induced potential cancels the radial
dependence of U, leaving the constant -G M m / r0, and the current speed is
the constant v0 = G M / sigma^2 = sqrt(2 G M / r0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .io import write_csv
from .units import (
    GRAVITATIONAL,
    LENGTH,
    MASS,
    NOISE,
    SPEED,
    PhysicalConstants,
    Quantity,
    UnitSystem,
    kepler_scales,
    sigma_from_v0,
)


@dataclass(frozen=True)
class KeplerModel:
    """G, M, m and sigma as plain numbers in one unit system; r0 and v0 are derived."""

    G: float
    M: float
    sigma: float
    m: float = 1.0
    units: str = "natural"

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError("test mass m must be positive")
        kepler_scales(self.G, self.M, self.sigma)

    @classmethod
    def from_v0(cls, G: float, M: float, v0: float, m: float = 1.0, units: str = "natural") -> KeplerModel:
        return cls(G, M, sigma_from_v0(G, M, v0), m, units)

    @classmethod
    def natural(cls) -> KeplerModel:
        """G = M = m = sigma = 1, so r0 = 2 and v0 = 1."""
        return cls(1.0, 1.0, 1.0)

    @property
    def gm(self) -> float:
        return self.G * self.M

    @property
    def gmm(self) -> float:
        return self.G * self.M * self.m

    @property
    def r0(self) -> float:
        return kepler_scales(self.G, self.M, self.sigma).r0

    @property
    def v0(self) -> float:
        return kepler_scales(self.G, self.M, self.sigma).v0

    @property
    def energy_scale(self) -> float:
        """G M m / r0, the depth of the total potential."""
        return self.gmm / self.r0

    def quantities(self) -> dict[str, Quantity]:
        """Inputs and derived scales with their dimensions attached."""
        G = Quantity(self.G, GRAVITATIONAL)
        M = Quantity(self.M, MASS)
        s = Quantity(self.sigma, NOISE)
        r0 = 2.0 * s ** 4 / (G * M)
        v0 = G * M / s ** 2
        return {"G": G, "M": M, "m": Quantity(self.m, MASS), "sigma": s, "r0": r0, "v0": v0}

    def describe(self) -> dict:
        return {"G": self.G, "M": self.M, "m": self.m, "sigma": self.sigma, "units": self.units, "r0": self.r0, "v0": self.v0}


def _radius(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ConfigError("radius must be strictly positive")
    return r


def kepler_potential(model: KeplerModel, r):
    return -model.gmm / _radius(r)


def kepler_induced_potential(model: KeplerModel, r):
    """-(G M m / r0)(1 - r0 / r): repulsive inside r0, attractive outside."""
    r = _radius(r)
    return -model.energy_scale * (1.0 - model.r0 / r)


def total_potential(model: KeplerModel, r):
    return kepler_potential(model, r) + kepler_induced_potential(model, r)


def flat_rotation_speed(model: KeplerModel) -> float:
    """v0 = sqrt(2 G M / r0); takes no radius because it has no radial dependence."""
    return math.sqrt(2.0 * model.gm / model.r0)


def keplerian_speed(model: KeplerModel, r):
    """Circular speed sqrt(G M / r) of the deterministic problem, for comparison."""
    return np.sqrt(model.gm / _radius(r))


def ground_state_density(model: KeplerModel, r):
    """Normalized exp(-4 r / r0) in three dimensions."""
    r0 = model.r0
    return np.exp(-4.0 * _radius(r) / r0) * 8.0 / (math.pi * r0 ** 3)


def osmotic_speed(model: KeplerModel) -> float:
    """|u| = 2 sigma^2 / r0 for the ground state, directed towards the origin."""
    return 2.0 * model.sigma ** 2 / model.r0


# ---------------------------------------------------------------- curves

def potential_table(model: KeplerModel, r_over_r0: np.ndarray) -> dict[str, np.ndarray]:
    """Potentials in units of G M m / r0 against r / r0, plus the flat speed."""
    r = np.asarray(r_over_r0, dtype=float) * model.r0
    scale = model.energy_scale
    return {
        "r": r / model.r0,
        "U_kepler": kepler_potential(model, r) / scale,
        "U_induced": kepler_induced_potential(model, r) / scale,
        "U_total": total_potential(model, r) / scale,
        "v_circ": np.full(r.shape, flat_rotation_speed(model)),
    }


def rotation_table(model: KeplerModel, r: np.ndarray) -> dict[str, np.ndarray]:
    """Flat speed and the Keplerian branch on radii in model units."""
    r = _radius(r)
    return {"r": r, "v_flat": np.full(r.shape, flat_rotation_speed(model)), "v_kepler": keplerian_speed(model, r)}


def write_table(path, table: dict[str, np.ndarray]) -> None:
    write_csv(path, list(table), list(table.values()))


# ---------------------------------------------------------------- polar coordinates

@dataclass(frozen=True)
class PolarVelocity:
    """Radial and orthoradial parts of the current velocity plus the full complex derivative."""

    v_r: np.ndarray
    v_theta: np.ndarray
    complex_derivative: np.ndarray  # (N, 2) Cartesian components of D_mu X

    @property
    def current(self) -> np.ndarray:
        return self.complex_derivative.real


def polar_velocity_decomposition(r, theta, d_r, d_theta, mu: int, sigma_r: float, sigma_theta: float) -> PolarVelocity:
    """Chain rule for X = r e_theta with r and theta driven by one Brownian motion.

        D_mu X = D_mu r e_theta + D_mu theta r e_perp
                 - i (mu / 2) sigma_theta^2 r e_theta + i mu sigma_r sigma_theta e_perp

    The Ito terms are purely imaginary, so v_r = Re D_mu r and
    v_theta = r Re D_mu theta.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d_r = np.asarray(d_r, dtype=complex)
    d_theta = np.asarray(d_theta, dtype=complex)
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    e_perp = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    radial = d_r - 0.5j * mu * sigma_theta ** 2 * r
    ortho = d_theta * r + 1j * mu * sigma_r * sigma_theta
    dx = radial[..., None] * e + ortho[..., None] * e_perp
    return PolarVelocity(d_r.real, d_theta.real * r, dx)


def _angle_bins(theta: np.ndarray, n_bins: int) -> np.ndarray:
    return np.minimum((np.mod(theta, 2.0 * math.pi) / (2.0 * math.pi) * n_bins).astype(np.int64), n_bins - 1)


def _binned_mean(labels: np.ndarray, values: np.ndarray, n_bins: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=n_bins)
    sums = np.bincount(labels, weights=values, minlength=n_bins)
    return sums / np.maximum(counts, 1)


@dataclass(frozen=True)
class PolarDerivatives:
    """Forward and backward derivatives of r and theta, conditioned on the angle only."""

    forward_r: np.ndarray
    backward_r: np.ndarray
    forward_theta: np.ndarray
    backward_theta: np.ndarray

    def complex(self, mu: int) -> tuple[np.ndarray, np.ndarray]:
        d_r = 0.5 * (self.forward_r + self.backward_r) + 0.5j * mu * (self.forward_r - self.backward_r)
        d_t = 0.5 * (self.forward_theta + self.backward_theta) + 0.5j * mu * (self.forward_theta - self.backward_theta)
        return d_r, d_t


def polar_derivatives(ens, lag: int = 1, n_bins: int = 32, pool: bool = True) -> PolarDerivatives:
    """Binned regression of r and theta increments on the current angle.

    ``ens`` holds (r, theta) with theta unwrapped.  Conditioning on the angle
    alone is exact when r is deterministic or independent of the angle.  With
    ``pool`` every interior recorded time contributes, which assumes the
    state is stationary.  Returns per-path values at every used time, shape
    (paths * times,).
    """
    rs, ths = ens.paths[:, :, 0], ens.paths[:, :, 1]
    idx = np.arange(lag, ens.times.size - lag) if pool else np.array([ens.times.size // 2])
    fr, br, ft, bt, lab = [], [], [], [], []
    for j in idx:
        hf = ens.times[j + lag] - ens.times[j]
        hb = ens.times[j] - ens.times[j - lag]
        fr.append((rs[:, j + lag] - rs[:, j]) / hf)
        br.append((rs[:, j] - rs[:, j - lag]) / hb)
        ft.append((ths[:, j + lag] - ths[:, j]) / hf)
        bt.append((ths[:, j] - ths[:, j - lag]) / hb)
        lab.append(_angle_bins(ths[:, j], n_bins))
    lab = np.concatenate(lab)
    fit = lambda vals: _binned_mean(lab, np.concatenate(vals), n_bins)[lab]  # noqa: E731
    return PolarDerivatives(fit(fr), fit(br), fit(ft), fit(bt))


def cartesian_frame_derivatives(ens, mu: int, lag: int = 1, n_bins: int = 32) -> np.ndarray:
    """D_mu X from Cartesian increments of r e_theta, in the local (e_theta, e_perp) frame.

    Returns an (n_bins, 2) complex array: per angle bin, the radial and
    orthoradial components.  Pooled over all interior recorded times.
    """
    rs, ths = ens.paths[:, :, 0], ens.paths[:, :, 1]
    xs = rs[..., None] * np.stack([np.cos(ths), np.sin(ths)], axis=-1)
    comps = {k: [] for k in ("fr", "fo", "br", "bo")}
    labels = []
    for j in range(lag, ens.times.size - lag):
        e = np.stack([np.cos(ths[:, j]), np.sin(ths[:, j])], axis=-1)
        ep = np.stack([-np.sin(ths[:, j]), np.cos(ths[:, j])], axis=-1)
        fwd = (xs[:, j + lag] - xs[:, j]) / (ens.times[j + lag] - ens.times[j])
        bwd = (xs[:, j] - xs[:, j - lag]) / (ens.times[j] - ens.times[j - lag])
        comps["fr"].append(np.sum(fwd * e, axis=1))
        comps["fo"].append(np.sum(fwd * ep, axis=1))
        comps["br"].append(np.sum(bwd * e, axis=1))
        comps["bo"].append(np.sum(bwd * ep, axis=1))
        labels.append(_angle_bins(ths[:, j], n_bins))
    lab = np.concatenate(labels)
    m = {k: _binned_mean(lab, np.concatenate(v), n_bins) for k, v in comps.items()}
    radial = 0.5 * (m["fr"] + m["br"]) + 0.5j * mu * (m["fr"] - m["br"])
    ortho = 0.5 * (m["fo"] + m["bo"]) + 0.5j * mu * (m["fo"] - m["bo"])
    return np.stack([radial, ortho], axis=-1)


def orthoradial_speed_squared(ens, lag: int = 1, n_bins: int = 32) -> float:
    """Monte Carlo E[v_theta^2] with v_theta = r Re D_mu theta (angle-conditioned)."""
    d = polar_derivatives(ens, lag, n_bins)
    re_theta = 0.5 * (d.forward_theta + d.backward_theta)
    r = np.concatenate([ens.paths[:, j, 0] for j in range(lag, ens.times.size - lag)])
    return float(np.mean((r * re_theta) ** 2))


# ---------------------------------------------------------------- circular orbits

@dataclass(frozen=True)
class CircularOrbitState:
    r: float
    L0: float
    v_theta: float

    @property
    def v_theta_squared(self) -> float:
        return self.v_theta ** 2


def circular_orbit_relations(model: KeplerModel, L0: float) -> CircularOrbitState:
    """Orbit radius r = sqrt(L0^2 r0 / (2 G M)) and E[v_theta^2] = v0^2 = L0^2 / r^2."""
    if L0 == 0 or not math.isfinite(L0):
        raise ConfigError("L0 = 0 admits no circular orbit")
    r = math.sqrt(L0 ** 2 * model.r0 / (2.0 * model.gm))
    v_theta = abs(L0) / r
    v0 = flat_rotation_speed(model)
    if abs(v_theta - v0) > 1e-10 * v0:
        raise ConfigError(f"orbit speed {v_theta} disagrees with the flat speed {v0}")
    return CircularOrbitState(r, float(L0), v_theta)


# ---------------------------------------------------------------- galaxy estimates

QUOTED_R0_PREFACTOR_KPC = 4.1
QUOTED_R0_ENDPOINTS = {8: (41.0, "pc"), 12: (410.0, "kpc")}
QUOTED_MILKY_WAY_R0_KPC = 8.0
QUOTED_SIGMA2_PREFACTOR = 205.0  # kpc^2 s^-1, times 10^(p+3)
MILKY_WAY_MASS_MSUN = 8e10
MILKY_WAY_V0_KMS = 220.0
CATALOG_V0_KMS = 144.0


def round_sig(x: float, digits: int = 2) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


@dataclass
class GalaxyEstimate:
    """Formula values for one galaxy, with quoted literature values where they exist."""

    mass_msun: float
    v0_kms: float
    r0_kpc: float
    sigma2_kpc_kms: float
    sigma2_kpc2_per_s: float
    quoted: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mass_msun": self.mass_msun,
            "v0_kms": self.v0_kms,
            "r0_kpc": self.r0_kpc,
            "r0_pc": self.r0_kpc * 1e3,
            "sigma2_kpc_km_per_s": self.sigma2_kpc_kms,
            "sigma2_kpc2_per_s": self.sigma2_kpc2_per_s,
            "quoted": self.quoted,
            "flags": self.flags,
        }


def _match(formula: float, quoted: float, digits: int = 2) -> bool:
    return round_sig(formula, digits) == round_sig(quoted, digits)


def galaxy_estimate(mass_msun: float, v0_kms: float, constants: PhysicalConstants | None = None, p_exponent: int | None = None) -> GalaxyEstimate:
    """r0 = 2 G M / v0^2 and sigma^2 = G M / v0 in galactic units.

    When ``p_exponent`` is given the mass is 10^p solar masses and the quoted
    scaling values are attached with match flags.
    """
    c = constants or PhysicalConstants()
    gal = UnitSystem.galactic(c)
    if not (mass_msun > 0 and v0_kms > 0):
        raise ConfigError("mass and v0 must be positive")
    gm = gal.G_value * mass_msun  # kpc km^2 s^-2
    r0 = 2.0 * gm / v0_kms ** 2
    sigma2 = gm / v0_kms  # kpc km s^-1
    sigma2_kpc2 = sigma2 / (c.kpc_m / 1e3)  # kpc^2 s^-1
    est = GalaxyEstimate(mass_msun, v0_kms, r0, sigma2, sigma2_kpc2)
    if p_exponent is not None:
        quoted_r0 = QUOTED_R0_PREFACTOR_KPC * 10.0 ** (p_exponent - 10)
        est.quoted["r0_kpc"] = quoted_r0
        est.flags["r0_match"] = _match(r0, quoted_r0)
        if p_exponent in QUOTED_R0_ENDPOINTS:
            value, unit = QUOTED_R0_ENDPOINTS[p_exponent]
            formula = r0 * 1e3 if unit == "pc" else r0
            est.quoted[f"r0_{unit}"] = value
            est.flags["endpoint_match"] = _match(formula, value)
        quoted_s2 = QUOTED_SIGMA2_PREFACTOR * 10.0 ** (p_exponent + 3)
        est.quoted["sigma2_kpc2_per_s"] = quoted_s2
        est.flags["sigma2_match"] = _match(sigma2_kpc2, quoted_s2)
        est.flags["sigma2_note"] = "quoted value not reproduced by sigma^2 = G M / v0 in any consistent units"
    return est


def milky_way_estimate(constants: PhysicalConstants | None = None) -> GalaxyEstimate:
    est = galaxy_estimate(MILKY_WAY_MASS_MSUN, MILKY_WAY_V0_KMS, constants)
    est.quoted["r0_kpc"] = QUOTED_MILKY_WAY_R0_KPC
    est.flags["r0_match"] = _match(est.r0_kpc, QUOTED_MILKY_WAY_R0_KPC, 1)
    est.flags["r0_note"] = "the quoted radius is not what 2 G M / v0^2 gives for these inputs"
    return est


def galaxy_scan(p_values=range(8, 13), v0_kms: float = CATALOG_V0_KMS, constants: PhysicalConstants | None = None) -> list[GalaxyEstimate]:
    return [galaxy_estimate(10.0 ** p, v0_kms, constants, int(p)) for p in p_values]


def quantity_check(model: KeplerModel) -> bool:
    """True when v0^2 and 2 G M / r0 carry the same dimension."""
    q = model.quantities()
    return (q["v0"] ** 2).dim == (2.0 * q["G"] * q["M"] / q["r0"]).dim == SPEED ** 2 and q["r0"].dim == LENGTH
