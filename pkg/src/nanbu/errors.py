"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a mathematical function."""


class QuadratureError(ArithmeticError):
    """A numerical integral could not be resolved to the requested tolerance.

    ``estimate`` and ``error`` carry the best value obtained and its error bound.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class CapacityError(ValueError):
    """A problem exceeds the configured size of an exact solver."""


class ConfigError(ValueError):
    """A configuration file or option is malformed."""


class InputError(ValueError):
    """Input data (a file or a point cloud) cannot be used."""
