"""Exception types shared across the library.

Each class maps to a distinct nonzero CLI exit code (see `adfuse.cli`),
so callers can tell configuration mistakes from bad data from numeric
blow-ups without parsing messages.
"""


class AdfuseError(Exception):
    """Base class for all errors raised by this library."""


class ShapeError(AdfuseError):
    """Operand dimensions are inconsistent. Messages name both shapes."""


class NumericError(AdfuseError):
    """A computation produced a non-finite value."""


class ConfigError(AdfuseError):
    """A configuration value violates an invariant."""


class DataError(AdfuseError):
    """A dataset record violates the declared header/schema."""


class ParseError(DataError):
    """A dataset file could not be parsed. Messages carry the line number."""


class UsageError(AdfuseError):
    """An API was called outside its contract (empty input, stale cache, ...)."""
