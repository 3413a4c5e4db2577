"""Error taxonomy shared by the whole package.

Each class maps to one CLI exit code: usage errors exit 1, data errors
exit 2, numeric failures exit 3.
"""


class CardlError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(CardlError):
    """The caller misused an API or the command line (bad flags, bad call order)."""

    exit_code = 1


class DimensionError(UsageError):
    """Array shapes or vector dimensions do not line up."""


class DataError(CardlError):
    """Input data is malformed, inconsistent, or references unknown ids."""

    exit_code = 2


class NumericError(CardlError):
    """A computation produced or encountered non-finite / degenerate values."""

    exit_code = 3
