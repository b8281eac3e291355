"""Shared exception types."""


class ConfigurationError(ValueError):
    """A parameter or configuration value violates its constraints."""


class NumericsError(ArithmeticError):
    """A numeric routine produced a non-finite value or failed to converge."""


class InsufficientDataError(RuntimeError):
    """Not enough samples/cycles to form the requested estimate."""
