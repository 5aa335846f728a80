"""Exception hierarchy shared by all modules."""


class LocalVolError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LocalVolError, ValueError):
    """An argument lies outside the domain of the operation."""


class DataError(LocalVolError, ValueError):
    """Market data is inconsistent or incomplete."""


class ParseError(DataError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(LocalVolError, ValueError):
    """An object was built from an invalid configuration."""


class NumericalError(LocalVolError, ArithmeticError):
    """A numerical routine failed (zero pivot, no convergence, mesh breach)."""
