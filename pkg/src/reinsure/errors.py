"""Exception types shared across the package."""


class ReinsureError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ReinsureError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(ReinsureError, ArithmeticError):
    """A computation lost accuracy beyond repair (overflow, underflow)."""


class DegenerateObservation(ReinsureError, ValueError):
    """A claim observation has zero likelihood under every hidden state."""


class NonConcaveError(ReinsureError, RuntimeError):
    """The retention objective is not concave; the optimizer refuses to guess."""


class StabilityError(ReinsureError, RuntimeError):
    """A discretization step is too coarse for the model's event rates."""


class ConfigError(ReinsureError, ValueError):
    """A scenario configuration is malformed or inconsistent."""
