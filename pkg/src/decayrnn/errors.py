"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class ConfigError(ValueError):
    """Invalid argument, flag, or configuration value."""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(ArithmeticError):
    """Non-finite values encountered during optimization."""
