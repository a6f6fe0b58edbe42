"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
1 for invalid input, 2 for filesystem trouble, 3 for data that is valid but
too thin to compare.
"""

from __future__ import annotations


class PscError(Exception):
    exit_code = 1

    def __init__(self, message: str, **details: object) -> None:
        super().__init__(message)
        self.message = message
        self.details = {k: v for k, v in details.items() if v is not None}

    @property
    def kind(self) -> str:
        return type(self).__name__


# -- validation (exit 1) ---------------------------------------------------


class ValidationError(PscError):
    pass


class OutOfRange(ValidationError):
    pass


class NegativeValue(ValidationError):
    pass


class NonIntegerQueries(ValidationError):
    pass


class EmptyIdentifier(ValidationError):
    pass


class InvalidRange(ValidationError):
    pass


class InvalidResolution(ValidationError):
    pass


class InvalidOrder(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class InvalidCrossing(ValidationError):
    pass


class SpecMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class EmptyReport(ValidationError):
    pass


# -- insufficient data (exit 3) --------------------------------------------


class InsufficientData(PscError):
    exit_code = 3


class NoApplicableRecords(InsufficientData):
    pass


class InsufficientPoints(InsufficientData):
    pass


class DegenerateAbscissae(InsufficientData):
    pass


class KeyNotFound(InsufficientData):
    pass


# -- storage (exit 2) ------------------------------------------------------


class IOFailure(PscError):
    exit_code = 2


class ConflictArchiveFailure(IOFailure):
    pass
