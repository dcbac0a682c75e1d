"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: UsageError -> 1,
DataError -> 2, anything else -> 3.
"""


class EdgekitError(Exception):
    """Base class for all toolkit errors."""


class UsageError(EdgekitError):
    """Bad arguments, invalid configuration, or misuse of an API contract."""


class DataError(EdgekitError):
    """Unreadable, missing, or malformed input data."""


class ShapeError(UsageError):
    """Array dimensions incompatible with the requested operation."""
