"""Exception types shared across the package.

The CLI maps these onto process exit codes, so every failure that can
reach a user should be raised as one of them.
"""


class SSBError(Exception):
    """Base class for all errors raised by ssbnet."""


class ShapeError(SSBError, ValueError):
    """Operands have incompatible shapes."""


class ConfigError(SSBError, ValueError):
    """Invalid network spec, run config or CLI argument."""


class DataError(SSBError):
    """Malformed dataset, image or checkpoint file."""


class NumericError(SSBError, FloatingPointError):
    """A NaN or Inf appeared where finite values were required."""
