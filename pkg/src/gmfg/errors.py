"""Exception types raised across the package."""


class GmfgError(Exception):
    """Base class for all package errors."""


class DimensionError(GmfgError, ValueError):
    pass


class ValidationError(GmfgError, ValueError):
    pass


class BoundError(GmfgError, ValueError):
    pass


class SizeError(GmfgError, ValueError):
    pass


class DomainError(GmfgError, ValueError):
    pass


class ParameterError(GmfgError, ValueError):
    pass


class ModeError(GmfgError, ValueError):
    pass


class PreconditionError(GmfgError, ValueError):
    pass


class HypothesisError(GmfgError, ValueError):
    """An assumption required by a specialised solver does not hold."""


class UndefinedError(GmfgError, ArithmeticError):
    pass


class IntegrationError(GmfgError, ArithmeticError):
    """Non-finite derivative met during time stepping."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DivergenceError(GmfgError, ArithmeticError):
    """A solution left the finite range (norm above the blow-up threshold)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConfigError(GmfgError, ValueError):
    """Malformed experiment configuration; message carries the field path."""
