"""Exception types shared across the package.

Everything derives from :class:`CretError`, which itself derives from
``ValueError`` so callers can catch either the library hierarchy or the
builtin one.
"""


class CretError(ValueError):
    """Base class for all library errors."""


class EmptyCandidateList(CretError):
    """A candidate list was empty where at least one entry is required."""


class InvalidScore(CretError):
    """A score is NaN or infinite where a finite value is required."""


class DimensionMismatch(CretError):
    """Vector dimensions do not agree."""


class InvalidQuery(CretError):
    """A query vector is unusable (zero norm or non-finite entries)."""


class InvalidArgument(CretError):
    """An argument is outside its valid range."""


class NonPositiveMax(CretError):
    """Max-normalization requested but the largest score is <= 0."""


class DegenerateScores(CretError):
    """All scores of a query are equal; z-scoring is undefined."""


class TransformMismatch(CretError):
    """A run's score transform does not match the calibrator's."""


class NoCalibrationData(CretError):
    """Calibration was attempted with zero records."""


class MissingGroundTruth(CretError):
    """A query has no ground-truth label."""


class DuplicateEntry(CretError):
    """The same (query, doc) pair appears more than once."""


class NoRelevantDoc(CretError):
    """A labeled query has no positive-grade document."""


class RunParseError(CretError):
    """A data file could not be parsed; the message carries file and line."""
