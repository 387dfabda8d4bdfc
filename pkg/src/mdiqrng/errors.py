"""Exception hierarchy shared across the certification pipeline."""


class MdiQrngError(Exception):
    """Base class for all package errors."""


class ValidationError(MdiQrngError, ValueError):
    """Raised when an input violates a documented invariant."""


class DegenerateStatistics(MdiQrngError):
    """Raised when a count is too small for the Chernoff interval to exist."""


class IncompleteData(ValidationError):
    """Raised when a counts table is missing a (probe, intensity) cell."""


class DecoyUnavailable(ValidationError):
    """Raised when the decoy estimator is asked to work with a zero decoy intensity."""


class NoRandomness(MdiQrngError):
    """Raised when the lower bound on the click weight a1 is not positive."""


class InfeasibleRegion(MdiQrngError):
    """Raised when the POVM parameter box has no physical point."""


class CountsParseError(ValidationError):
    """Raised for malformed counts CSV files; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
