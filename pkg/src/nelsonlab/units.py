"""Dimensioned scalars over (length, time, mass), unit systems and constants.

Simulations run in the natural system, where G = 1, lengths are in kpc and
masses in solar masses. Galactic units (kpc, km/s, solar masses) appear only
at the command-line boundary.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Union

from .errors import ConfigError, DimensionError, NumericalError

Exponent = Union[int, Fraction]
_AXES = ("length", "time", "mass")


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(64)
    return Fraction(x)


@dataclass(frozen=True)
class Dimension:
    length: Fraction = Fraction(0)
    time: Fraction = Fraction(0)
    mass: Fraction = Fraction(0)

    def __post_init__(self):
        for name in _AXES:
            object.__setattr__(self, name, _frac(getattr(self, name)))

    def exponents(self) -> tuple[Fraction, Fraction, Fraction]:
        return (self.length, self.time, self.mass)

    def __mul__(self, other: Dimension) -> Dimension:
        return Dimension(*(a + b for a, b in zip(self.exponents(), other.exponents())))

    def __truediv__(self, other: Dimension) -> Dimension:
        return Dimension(*(a - b for a, b in zip(self.exponents(), other.exponents())))

    def __pow__(self, power) -> Dimension:
        p = _frac(power)
        return Dimension(*(a * p for a in self.exponents()))

    def mismatch(self, other: Dimension) -> str:
        """Describe the first differing exponent, for error messages."""
        for name, a, b in zip(_AXES, self.exponents(), other.exponents()):
            if a != b:
                return f"{name} exponent {a} != {b}"
        return ""

    def __str__(self) -> str:
        parts = [f"{sym}^{e}" for sym, e in zip("LTM", self.exponents()) if e != 0]
        return " ".join(parts) if parts else "1"


DIMENSIONLESS = Dimension()
LENGTH = Dimension(length=1)
TIME = Dimension(time=1)
MASS = Dimension(mass=1)
SPEED = LENGTH / TIME
GRAVITATIONAL = Dimension(length=3, time=-2, mass=-1)
# dX = sigma dW with [W] = T^(1/2), so sigma carries L T^(-1/2)
NOISE = Dimension(length=1, time=Fraction(-1, 2))
ENERGY = MASS * SPEED ** 2


@dataclass(frozen=True)
class Quantity:
    value: float
    dim: Dimension = DIMENSIONLESS

    def _check_same(self, other: Quantity, op: str) -> None:
        if self.dim != other.dim:
            raise DimensionError(f"cannot {op} {self.dim} and {other.dim}: {self.dim.mismatch(other.dim)}")

    def __add__(self, other: Quantity) -> Quantity:
        self._check_same(other, "add")
        return Quantity(self.value + other.value, self.dim)

    def __sub__(self, other: Quantity) -> Quantity:
        self._check_same(other, "subtract")
        return Quantity(self.value - other.value, self.dim)

    def __neg__(self) -> Quantity:
        return Quantity(-self.value, self.dim)

    def __mul__(self, other) -> Quantity:
        if isinstance(other, Quantity):
            return Quantity(self.value * other.value, self.dim * other.dim)
        return Quantity(self.value * other, self.dim)

    __rmul__ = __mul__

    def __truediv__(self, other) -> Quantity:
        if isinstance(other, Quantity):
            return Quantity(self.value / other.value, self.dim / other.dim)
        return Quantity(self.value / other, self.dim)

    def __rtruediv__(self, other) -> Quantity:
        return Quantity(other / self.value, DIMENSIONLESS / self.dim)

    def __pow__(self, power) -> Quantity:
        return Quantity(self.value ** float(_frac(power)), self.dim ** power)

    def sqrt(self) -> Quantity:
        return self ** Fraction(1, 2)

    def __float__(self) -> float:
        return float(self.value)

    def __str__(self) -> str:
        return f"{self.value:.6g} [{self.dim}]"


@dataclass(frozen=True)
class PhysicalConstants:
    """Astronomical constants in the units they are usually quoted in."""

    solar_mass_kg: float = 1.98e30
    parsec_km: float = 3.086e13
    G_galactic: float = 4.3e-6  # kpc km^2 s^-2 Msun^-1

    @property
    def kpc_m(self) -> float:
        return self.parsec_km * 1e3 * 1e3

    @property
    def G_si(self) -> float:
        return self.G_galactic * self.kpc_m * 1e6 / self.solar_mass_kg

    def unit_table(self) -> dict[str, tuple[float, Dimension]]:
        """SI factor and dimension of every unit symbol accepted in config files."""
        return {
            "m": (1.0, LENGTH),
            "km": (1e3, LENGTH),
            "pc": (self.parsec_km * 1e3, LENGTH),
            "kpc": (self.kpc_m, LENGTH),
            "s": (1.0, TIME),
            "yr": (3.15576e7, TIME),
            "kg": (1.0, MASS),
            "Msun": (self.solar_mass_kg, MASS),
        }

    @classmethod
    def from_config(cls, path: str | Path) -> PhysicalConstants:
        """Read overrides from the ``[constants]`` section of an INI file.

        Values are ``number unit...`` strings, for example
        ``G = 4.3e-6 kpc km^2 s^-2 Msun^-1``.
        """
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if not parser.has_section("constants"):
            return cls()
        return cls.from_mapping(dict(parser.items("constants")))

    @classmethod
    def from_mapping(cls, entries: dict[str, str]) -> PhysicalConstants:
        known = {"solar_mass", "parsec", "g"}
        unknown = set(k.lower() for k in entries) - known
        if unknown:
            raise ConfigError(f"unknown constant(s): {sorted(unknown)}")
        lowered = {k.lower(): v for k, v in entries.items()}
        base = cls()
        solar = base.solar_mass_kg
        if "solar_mass" in lowered:
            q = base.parse(lowered["solar_mass"])
            _expect(q, MASS, "solar_mass")
            solar = q.value
        parsec = base.parsec_km
        if "parsec" in lowered:
            q = base.parse(lowered["parsec"])
            _expect(q, LENGTH, "parsec")
            parsec = q.value / 1e3
        updated = cls(solar_mass_kg=solar, parsec_km=parsec, G_galactic=base.G_galactic)
        if "g" in lowered:
            # units of G may refer to pc and Msun, so parse with the updated table
            q = updated.parse(lowered["g"])
            _expect(q, GRAVITATIONAL, "G")
            galactic_factor = updated.kpc_m * 1e6 / updated.solar_mass_kg
            updated = cls(solar_mass_kg=solar, parsec_km=parsec, G_galactic=q.value / galactic_factor)
        return updated

    def parse(self, text: str) -> Quantity:
        """Parse ``"<number> <unit>^<exp> ..."`` into an SI quantity."""
        tokens = text.replace("*", " ").split()
        if not tokens:
            raise ConfigError("empty quantity string")
        try:
            value = float(tokens[0])
        except ValueError:
            raise ConfigError(f"quantity must start with a number: {text!r}") from None
        table = self.unit_table()
        dim = DIMENSIONLESS
        for tok in tokens[1:]:
            m = re.fullmatch(r"([A-Za-z]+)(?:\^(-?\d+(?:/\d+)?))?", tok)
            if not m or m.group(1) not in table:
                raise ConfigError(f"unknown unit {tok!r} in {text!r}")
            factor, udim = table[m.group(1)]
            power = Fraction(m.group(2)) if m.group(2) else Fraction(1)
            value *= factor ** float(power)
            dim = dim * udim ** power
        return Quantity(value, dim)


def _expect(q: Quantity, dim: Dimension, name: str) -> None:
    if q.dim != dim:
        raise DimensionError(f"{name} has dimension {q.dim}, expected {dim}: {q.dim.mismatch(dim)}")


@dataclass(frozen=True)
class UnitSystem:
    """A choice of length, time and mass units, given as SI factors."""

    name: str
    length_unit: float
    time_unit: float
    mass_unit: float
    G_value: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def speed_unit(self) -> float:
        return self.length_unit / self.time_unit

    @property
    def G(self) -> Quantity:
        return Quantity(self.G_value, GRAVITATIONAL)

    def factor(self, dim: Dimension) -> float:
        """SI value of one unit of ``dim`` in this system."""
        return (
            self.length_unit ** float(dim.length)
            * self.time_unit ** float(dim.time)
            * self.mass_unit ** float(dim.mass)
        )

    @classmethod
    def galactic(cls, constants: PhysicalConstants | None = None) -> UnitSystem:
        c = constants or PhysicalConstants()
        return cls("galactic", c.kpc_m, c.kpc_m / 1e3, c.solar_mass_kg, c.G_galactic, c)

    @classmethod
    def natural(cls, constants: PhysicalConstants | None = None) -> UnitSystem:
        c = constants or PhysicalConstants()
        # same length and mass units as galactic; the time unit absorbs G
        time_unit = math.sqrt(c.kpc_m ** 3 / (c.G_si * c.solar_mass_kg))
        return cls("natural", c.kpc_m, time_unit, c.solar_mass_kg, 1.0, c)

    @classmethod
    def si(cls, constants: PhysicalConstants | None = None) -> UnitSystem:
        c = constants or PhysicalConstants()
        return cls("si", 1.0, 1.0, 1.0, c.G_si, c)

    @classmethod
    def by_name(cls, name: str, constants: PhysicalConstants | None = None) -> UnitSystem:
        builders = {"natural": cls.natural, "galactic": cls.galactic, "si": cls.si}
        if name not in builders:
            raise ConfigError(f"unknown unit system {name!r}; choose from {sorted(builders)}")
        return builders[name](constants)


def convert(q: Quantity, source: UnitSystem, target: UnitSystem, expected: Dimension | None = None) -> Quantity:
    """Re-express ``q`` (given in ``source`` units) in ``target`` units."""
    if expected is not None and q.dim != expected:
        raise DimensionError(f"expected {expected}, got {q.dim}: {q.dim.mismatch(expected)}")
    if source == target:
        return q
    return Quantity(q.value * source.factor(q.dim) / target.factor(q.dim), q.dim)


@dataclass(frozen=True)
class KeplerScales:
    r0: float
    v0: float


def kepler_scales(G, M, sigma) -> KeplerScales:
    """Characteristic radius 2 sigma^4 / (G M) and flat speed G M / sigma^2.

    Accepts plain floats in one consistent unit system, or Quantities, whose
    dimensions are checked.
    """
    if isinstance(G, Quantity):
        _expect(G, GRAVITATIONAL, "G")
        _expect(M, MASS, "M")
        _expect(sigma, NOISE, "sigma")
        G, M, sigma = G.value, M.value, sigma.value
    for name, val in (("G", G), ("M", M), ("sigma", sigma)):
        if not val > 0:
            raise ConfigError(f"{name} must be strictly positive, got {val}")
    gm = G * M
    r0 = 2.0 * sigma ** 4 / gm
    v0 = gm / sigma ** 2
    v0_alt = math.sqrt(2.0 * gm / r0)
    if abs(v0 - v0_alt) > 1e-12 * v0:
        raise NumericalError(f"v0 closed forms disagree: {v0} vs {v0_alt}")
    return KeplerScales(r0=r0, v0=v0)


def sigma_from_v0(G: float, M: float, v0: float) -> float:
    """Noise amplitude with sigma^2 = G M / v0."""
    if not (G > 0 and M > 0 and v0 > 0):
        raise ConfigError("G, M and v0 must be strictly positive")
    return math.sqrt(G * M / v0)
