"""Exception hierarchy shared across the package.

The command line maps these onto exit codes: 2 for configuration
problems, 3 for bad input data, 4 for numerical failures.
"""


class FcurveError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(FcurveError, ValueError):
    """Invalid parameters, options, or object construction arguments."""

    exit_code = 2


class DataError(FcurveError):
    """Input data is malformed, incomplete, or degenerate."""

    exit_code = 3


class NumericError(FcurveError, ArithmeticError):
    """A numerical procedure failed or reached an invalid state."""

    exit_code = 4
