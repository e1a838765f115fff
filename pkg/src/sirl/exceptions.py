"""Error types shared across the package.

Dimension and shape mismatches raise plain ValueError; these classes cover
the failure modes that callers may want to catch and map to exit codes.
"""


class ConfigError(ValueError):
    """Invalid or unknown configuration key, value, or file."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration cap before reaching tolerance."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared where the computation cannot continue."""
