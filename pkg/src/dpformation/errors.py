"""Exception hierarchy.

Everything raised on purpose by this package derives from ``FormationError``.
``ValidationError`` marks bad input (the CLI maps it to exit code 2); any
other ``FormationError`` is a runtime failure (exit code 3).
"""

from __future__ import annotations


class FormationError(Exception):
    """Base class for all package errors."""


class ValidationError(FormationError, ValueError):
    """Input rejected during construction or config loading.

    ``field`` is a dotted path into the config (``"channel.r[2]"``) when the
    error can be attributed to one.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        self.reason = message
        super().__init__(f"{field}: {message}" if field else message)


class ParseError(ValidationError):
    pass


class InvalidEdge(ValidationError):
    pass


class NotATree(ValidationError):
    pass


class NonPositiveParameter(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class HorizonTooShort(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class UnknownFamily(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NeighborMismatch(FormationError):
    pass


class SingularSystem(FormationError):
    pass


class EmptyWindow(FormationError):
    pass


class MissingRecords(FormationError):
    pass


class GainMissing(FormationError):
    pass


class UnknownFigure(FormationError):
    pass
