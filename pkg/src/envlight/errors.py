"""Structured exception types shared across the package."""


class EnvlightError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EnvlightError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionError(EnvlightError):
    """Array dimensions are mismatched or otherwise invalid."""


class ValidationError(EnvlightError):
    """A value violates a type invariant."""


class NotFoundError(EnvlightError):
    """A referenced id or named resource does not exist."""


class OptimizationError(EnvlightError):
    """The optimizer encountered a non-finite loss or gradient."""


class ParseError(EnvlightError):
    """Malformed file content.

    ``offset`` is the approximate byte offset at which parsing failed, when
    known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
