"""Exception types shared across the package."""


class OffBanditError(Exception):
    """Base class for all package errors."""


class DataError(OffBanditError):
    """Malformed input data or schema violations."""


class ConfigError(OffBanditError):
    """Invalid configuration or parameter values."""


class FitError(OffBanditError):
    """Model fitting failed or was given unusable training data."""
