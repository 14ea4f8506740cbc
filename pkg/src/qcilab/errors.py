"""Exception hierarchy.  The CLI maps every subclass to exit code 1."""


class QCIError(Exception):
    """Base class for all library errors."""


class ConfigurationError(QCIError, ValueError):
    """Invalid parameters or configuration values."""


class DomainError(QCIError, ValueError):
    """Argument outside the domain of an operation."""


class OutOfBandError(DomainError):
    """Evaluation left the microlocal band where the phase is defined."""


class BoundaryTieError(QCIError):
    """A region boundary passes within tolerance of a spectrum point."""


class IncompleteSpectrumError(QCIError):
    """The computed spectrum does not cover the requested region."""


class NumericError(QCIError, ArithmeticError):
    """A numerical routine failed to converge or resolve its target."""
