"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`LineComboError`, which is itself a ``ValueError`` so that callers
treating bad input generically keep working.
"""


class LineComboError(ValueError):
    """Base class for all package errors."""


class DataError(LineComboError):
    """Input data is malformed or violates a documented invariant."""


# geometry
class NoIntersection(DataError):
    pass


class DegenerateSegment(DataError):
    pass


class ParallelLines(DataError):
    pass


# arrangement
class DuplicateLines(DataError):
    pass


# candidates
class EmptyCandidates(DataError):
    pass


class KTooLarge(DataError):
    pass


# maps / grouping
class ShapeMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class BadChannelCount(DataError):
    pass


class BadPool(DataError):
    pass


class DegenerateSplit(DataError):
    pass


# scoring
class NoCombination(DataError):
    pass


class BadImage(DataError):
    pass


# applications
class AllParallel(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyIndexAfterFilter(DataError):
    pass


class TooFewPoints(DataError):
    pass


# io
class ParseError(DataError):
    pass


class InvariantViolation(DataError):
    pass


class SpecInvalid(DataError):
    pass
