"""Exception taxonomy shared across the package.

Three failure families, mapped to distinct CLI exit codes: bad
configuration, bad input data, and calls that break an operation's
contract (shape mismatches, out-of-range arguments, ...).
"""


class GlyphnetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GlyphnetError):
    """Invalid configuration: bad option values, unreadable font, unknown keys."""


class DataError(GlyphnetError):
    """Malformed or inconsistent input data (corpus files, category graphs)."""


class ContractViolation(GlyphnetError):
    """An operation was called with arguments that violate its contract."""
