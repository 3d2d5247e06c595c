"""Exception hierarchy shared by every module in the package."""


class ThsgrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ThsgrError):
    """Tensor shapes are incompatible for the requested operation."""


class ParameterError(ThsgrError):
    """An operation argument is outside its valid range."""


class ConfigError(ThsgrError):
    """A model or run configuration violates its invariants."""


class DataError(ThsgrError):
    """Dataset contents are invalid (bad labels, impossible split, ...)."""


class FormatError(ThsgrError):
    """A file on disk does not match the expected binary format."""


class NonFiniteError(ThsgrError):
    """A forward operation produced NaN or Inf values."""


class UsageError(ThsgrError):
    """The API was called in an unsupported way."""
