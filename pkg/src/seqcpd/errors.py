"""Exception types raised across the package."""


class DomainError(ValueError):
    """A parameter lies outside the domain where a quantity is defined."""


class ConfigError(ValueError):
    """A detector or simulation configuration is inconsistent."""


class PairVerificationError(ValueError):
    """An optimizer pair failed its fixed-point check."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CalibrationRangeError(RuntimeError):
    """No threshold in the search range reaches the calibration target."""
