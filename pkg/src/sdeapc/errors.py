"""Exception hierarchy shared across the package."""


class SdeError(Exception):
    """Base class for all package errors."""


class ConfigError(SdeError, ValueError):
    """Invalid configuration or argument combination."""


class DataError(SdeError, ValueError):
    """Input data that cannot be used as supplied."""


class OutOfRangeError(DataError):
    """Evaluation point outside the range a basis or model supports."""


class NumericalError(SdeError, RuntimeError):
    """Optimisation failed to converge or produced a non-PD curvature."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
