"""Exception types shared across the package.

Everything raised on purpose derives from one of these, so callers can
distinguish bad inputs (ValueError family) from numerical or bookkeeping
failures (RuntimeError / LookupError family).
"""


class ShapeError(ValueError):
    """An array argument has the wrong shape or an inconsistent dimension."""


class ParameterError(ValueError):
    """A scalar parameter is outside its legal range."""


class FactorizationError(RuntimeError):
    """A matrix stayed non-positive-definite through the whole jitter ladder.

    The message records the largest jitter that was attempted.
    """


class SingularExtensionError(FactorizationError):
    """A rank-one factorization extension hit a non-positive pivot."""


class PoolExhaustedError(RuntimeError):
    """A design step was requested but no active candidates remain."""


class BookkeepingError(LookupError):
    """An id does not refer to a live candidate or table row."""


class SchemaError(ValueError):
    """A column mapping does not match the file it is applied to."""


class ParseError(ValueError):
    """A data file has a malformed cell; the message carries the location."""


class EstimationError(ValueError):
    """A statistic is requested from data that cannot support it."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or internally inconsistent."""
