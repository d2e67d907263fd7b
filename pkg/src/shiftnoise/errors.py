"""Semantic exception hierarchy.

Everything raised on bad inputs derives from ShiftNoiseError so callers can
catch the library's failures without swallowing genuine bugs.
"""


class ShiftNoiseError(Exception):
    """Base class for all shiftnoise errors."""


class SpecError(ShiftNoiseError, ValueError):
    """A distribution / loss / experiment specification is invalid."""


class DimensionError(SpecError):
    """An input's dimensionality does not match the spec it is used with."""


class ConfigError(ShiftNoiseError, ValueError):
    """An experiment config file failed schema validation.

    The message always names the offending field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class DivergenceError(ShiftNoiseError, RuntimeError):
    """Training diverged beyond the representable range."""
