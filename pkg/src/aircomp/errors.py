"""Exception hierarchy shared by every module."""


class AirCompError(Exception):
    """Base class for all package errors."""


class ConfigError(AirCompError, ValueError):
    """Invalid configuration or argument value."""


class InstabilityError(ConfigError):
    """The process matrix has spectral radius >= 1."""


class NumericalError(AirCompError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class ConvergenceError(NumericalError):
    """An iterative routine hit its iteration cap."""
