"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError/DataError -> 1,
NumericalError -> 2, verification failures -> 3.
"""


class DctmError(Exception):
    pass


class ShapeError(DctmError, ValueError):
    """Operand dimensions are incompatible; the message names both shapes."""


class ConfigError(DctmError, ValueError):
    pass


class DataError(DctmError, ValueError):
    pass


class NumericalError(DctmError, ArithmeticError):
    """NaN/Inf reached a place where the contract forbids it."""
