"""Exception types shared across the package."""


class DsncError(Exception):
    """Base class for package errors."""


class DataError(DsncError):
    """Malformed or unusable input data, files, or serialized models."""


class NumericError(DsncError):
    """Non-finite values encountered during training or optimization."""
