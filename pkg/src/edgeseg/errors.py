"""Exception types shared across the package.

The CLI maps each class to a fixed exit code, so library code raises these
instead of bare ``ValueError`` whenever the failure kind matters.
"""


class EdgesegError(Exception):
    """Base class for all package errors."""


class UsageError(EdgesegError, ValueError):
    """Caller passed inconsistent or out-of-range arguments."""


class FormatError(EdgesegError, ValueError):
    """A file does not follow the expected on-disk format."""


class DomainError(EdgesegError, ArithmeticError):
    """A numeric operation is undefined for the given input."""
