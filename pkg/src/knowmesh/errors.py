"""Exception hierarchy shared by every knowmesh module."""

from __future__ import annotations


class KnowmeshError(Exception):
    """Base class for all knowmesh errors."""


class EmptyTerm(KnowmeshError, ValueError):
    pass


class NonCanonicalTerm(KnowmeshError, ValueError):
    pass


class LevelConflict(KnowmeshError):
    pass


class UnknownPredicate(KnowmeshError, ValueError):
    pass


class ParseError(KnowmeshError, ValueError):
    """Malformed document; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientData(KnowmeshError, ValueError):
    pass


class MixedAttributes(KnowmeshError, ValueError):
    pass


class NonNumericValues(KnowmeshError, ValueError):
    pass


class StateViolation(KnowmeshError):
    pass


class MessageTooLarge(KnowmeshError):
    pass


class IncompleteMessage(KnowmeshError):
    pass


class ProfileMismatch(KnowmeshError):
    pass


class UnknownKind(KnowmeshError, ValueError):
    pass


class SimplexViolation(KnowmeshError):
    pass


class ValidationError(KnowmeshError, ValueError):
    pass
