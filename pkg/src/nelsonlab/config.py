"""Run configuration: defaults, an optional INI file, then command-line flags.

The INI file may hold a ``[run]`` section whose keys match the long flag
names (dashes or underscores) and a ``[constants]`` section read by
:meth:`PhysicalConstants.from_config`.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .kepler import KeplerModel
from .units import PhysicalConstants, UnitSystem

STOCHASTIC = {"simulate", "density", "verify"}


@dataclass
class RunConfig:
    subcommand: str = ""
    units: str = "natural"
    mass: float | None = None
    m: float = 1.0
    sigma: float | None = None
    v0: float | None = None
    p_exponent: int | None = None
    potential: str = "kepler"
    strength: float = 1.0
    grid_n: int = 4096
    r_max: float = 40.0  # in units of r0
    paths: int = 20000
    steps: int = 40
    dt: float = 0.005
    seed: int | None = None
    out: str = "out"
    suite: str = "all"
    drift: str = "gradient"
    bandwidth: float | None = None
    ensemble: str | None = None
    method: str = "inverse"
    tolerance_newton: float = 1e-2
    tolerance_virial: float = 1e-2
    tolerance_hj: float = 1e-3
    tolerance_transport: float = 0.05
    tolerance_noether: float = 0.02
    config: str | None = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def validate(self) -> None:
        if self.units not in ("natural", "galactic", "si"):
            raise ConfigError(f"unknown unit system {self.units!r}")
        if self.sigma is not None and self.v0 is not None:
            raise ConfigError("give either --sigma or --v0, not both; the other is derived")
        if self.mass is not None and self.p_exponent is not None:
            raise ConfigError("give either --mass or --p-exponent, not both")
        if self.subcommand in STOCHASTIC and self.seed is None and not (self.subcommand == "density" and self.ensemble):
            raise ConfigError(f"'{self.subcommand}' is stochastic and needs --seed")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        for name in ("grid_n", "paths", "steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.dt > 0 or not self.r_max > 0:
            raise ConfigError("dt and r_max must be positive")

    @property
    def unit_system(self) -> UnitSystem:
        return UnitSystem.by_name(self.units, self.constants)

    def central_mass(self) -> float:
        if self.p_exponent is not None:
            return 10.0 ** self.p_exponent
        if self.mass is not None:
            return float(self.mass)
        return 1.0

    def kepler_model(self) -> KeplerModel:
        """Model in the configured unit system; sigma defaults to 1 only in natural units."""
        G = self.unit_system.G_value
        M = self.central_mass()
        if self.v0 is not None:
            return KeplerModel.from_v0(G, M, self.v0, self.m, self.units)
        if self.sigma is not None:
            return KeplerModel(G, M, self.sigma, self.m, self.units)
        if self.units == "natural":
            return KeplerModel(G, M, 1.0, self.m, self.units)
        raise ConfigError("Kepler runs outside natural units need exactly one of --sigma or --v0")

    def effective(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "constants":
                out[f.name] = dataclasses.asdict(self.constants)
            elif f.name != "config":
                out[f.name] = getattr(self, f.name)
        return out


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, text: str):
    kind = str(_TYPES[name])
    if text.lower() in ("none", ""):
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {name}") from None
    return text


def read_run_section(path: str) -> tuple[dict, PhysicalConstants]:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    values = {}
    if parser.has_section("run"):
        for key, text in parser.items("run"):
            name = key.replace("-", "_")
            if name not in _TYPES or name in ("constants", "config", "subcommand"):
                raise ConfigError(f"unknown key {key!r} in [run] of {path}")
            values[name] = _coerce(name, text)
    return values, PhysicalConstants.from_config(path)


def build_config(subcommand: str, flags: dict) -> RunConfig:
    """Merge defaults, the config file named in ``flags`` and explicit flags (not None)."""
    cfg = RunConfig(subcommand=subcommand)
    path = flags.get("config")
    if path:
        values, constants = read_run_section(path)
        for k, v in values.items():
            setattr(cfg, k, v)
        cfg.constants = constants
        cfg.config = path
    for k, v in flags.items():
        if v is not None and k in _TYPES and k not in ("constants", "subcommand"):
            setattr(cfg, k, v)
    cfg.validate()
    return cfg
