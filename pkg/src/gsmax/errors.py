"""Exception types shared across the library.

Each class marks one failure contract so callers can catch precisely the
condition they care about instead of string-matching messages.
"""


class GsmaxError(Exception):
    """Base class for all library errors."""


class ShapeError(GsmaxError, ValueError):
    """Operands have incompatible or invalid shapes."""


class NumericError(GsmaxError, ValueError):
    """Non-finite or otherwise numerically invalid values encountered."""


class LabelError(GsmaxError, ValueError):
    """A class label falls outside the declared label universe."""


class StateError(GsmaxError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class SizeError(GsmaxError, ValueError):
    """A problem instance exceeds a hard size guard."""


class ConfigError(GsmaxError, ValueError):
    """A configuration value or combination is invalid."""


class FormatError(GsmaxError, ValueError):
    """A file does not conform to its documented binary/text layout."""
