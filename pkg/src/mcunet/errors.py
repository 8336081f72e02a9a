"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ConfigError(ValidationError):
    """Raised for malformed or unknown configuration values."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver diverges."""


class NonFiniteLossError(RuntimeError):
    """Raised when a training loss term becomes NaN or infinite."""

    def __init__(self, term, coca, value):
        self.term = term
        self.coca = coca
        self.value = value
        where = "" if coca is None else f" at COCA {coca}"
        super().__init__(f"non-finite loss term {term!r}{where}: {value}")
