"""Errors raised across the gaitcast apps.

Everything derives from ``GaitcastError`` so the management commands can
catch one type and report the failing stage. Errors that signal a bad
argument also derive from ``ValueError``.
"""


class GaitcastError(Exception):
    """Base class for every domain error."""


class ConfigError(GaitcastError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class RecordFormatError(GaitcastError, ValueError):
    """A record file does not follow the canonical layout."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class RecordParseError(GaitcastError, ValueError):
    """A record value could not be parsed or is not finite."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DimensionError(GaitcastError, ValueError):
    """An array has the wrong number of columns or axes."""


class RangeError(GaitcastError, IndexError):
    """An index lies outside its valid range."""


class LengthError(GaitcastError, ValueError):
    """A signal or window is too short for the requested operation."""


class ShapeError(GaitcastError, ValueError):
    """Array shapes do not agree."""


class NumericError(GaitcastError, ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConditioningError(GaitcastError, ArithmeticError):
    """A covariance matrix stayed singular after jitter escalation."""


class HistoryError(GaitcastError, ValueError):
    """Not enough history for the requested lags."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class StageError(GaitcastError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f'{stage}: {cause}')
        self.stage = stage
        self.cause = cause
