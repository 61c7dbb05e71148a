"""Exception types raised across the package."""


class MetaRegError(Exception):
    """Base class for all package errors."""


class ShapeError(MetaRegError, ValueError):
    """Array shapes or parameter layouts do not line up."""


class DataError(MetaRegError, ValueError):
    """Bad input data. ``row`` is the 1-based data row when known."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DivergenceError(MetaRegError, RuntimeError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class NumericalError(MetaRegError, RuntimeError):
    """A factorization or solve failed."""


class ConfigError(MetaRegError, ValueError):
    """Invalid configuration value or document."""
