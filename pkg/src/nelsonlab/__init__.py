"""Stochastic Newton equations: Nelson derivatives, induced potentials and verifiers."""

from .errors import ConfigError, DimensionError, NumericalError
from .kepler import KeplerModel

__version__ = "0.1.0"

__all__ = ["ConfigError", "DimensionError", "NumericalError", "KeplerModel", "__version__"]
