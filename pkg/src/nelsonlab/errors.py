"""Exception types shared across the package.

The CLI maps these onto its exit codes: configuration problems exit with 1,
numerical failures with 3.
"""


class ConfigError(ValueError):
    """Invalid user input or configuration."""


class DimensionError(ConfigError):
    """Arithmetic or conversion between incompatible dimensions."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or failed to converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
