"""Exception types shared across the library and the CLI."""


class ConeExitError(Exception):
    """Base class for library errors."""


class ConfigError(ConeExitError):
    """Invalid user-supplied configuration (CLI exit code 2)."""


class NonConvergenceError(ConeExitError):
    """A series or quadrature failed to meet its error contract (CLI exit code 3).

    Carries the best available estimate so callers can inspect the failure.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NearDiagonalError(ConeExitError):
    """Series evaluation requested inside the excluded band around r = rho."""


class RootBracketError(ConeExitError):
    """Eigenvalue root finder could not bracket the requested root."""


class UnsupportedSpectrumError(ConeExitError):
    """Requested spectral entry is beyond the supported table for the family."""


class InsufficientTailDataError(ConeExitError):
    """Too few samples in the requested tail window for an exponent fit."""
