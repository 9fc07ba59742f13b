"""Exception hierarchy shared by all compgrad modules."""


class CompGradError(Exception):
    """Base class for every error raised by compgrad."""


class ConfigError(CompGradError, ValueError):
    """Invalid configuration: bad dimensions, out-of-range parameters, malformed presets."""


class UnknownTaskError(ConfigError):
    """Requested task/environment name is not registered."""


class NumericError(CompGradError, ArithmeticError):
    """A non-finite value appeared where a finite one is required.

    ``location`` identifies where (sample index, or ``(t, n)`` for trajectories).
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class InsufficientSamplesError(CompGradError, ValueError):
    """Empirical variance needs at least two samples."""


class ContractError(CompGradError, ValueError):
    """A function precondition was violated (e.g. negative variance)."""
