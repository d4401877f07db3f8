"""Exception hierarchy shared across the package.

The CLI maps each class to a stable exit code (see README).
"""


class MattingError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DimensionError(MattingError):
    """Array shapes do not agree."""

    exit_code = 6


class ParameterError(MattingError):
    """An operation parameter is out of its valid range."""

    exit_code = 7


class GeometryError(MattingError):
    """Patch/feature geometry constraints are violated."""

    exit_code = 4


class ConfigError(MattingError):
    """Configuration is invalid (unknown key, bad type, broken invariant)."""

    exit_code = 3


class DataError(MattingError):
    """Input data is malformed (bad trimap codes, empty dataset, ...)."""

    exit_code = 5


class MattingWarning(UserWarning):
    """Non-fatal conditions (empty masks treated as zero-loss, ...)."""
