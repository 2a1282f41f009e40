"""Exception taxonomy shared by all pipeline modules.

The CLI maps these onto exit codes: ConfigError -> 2, StageInputError -> 3,
DataError (and subclasses) -> 4.
"""

from __future__ import annotations


class CorpusError(Exception):
    """Base class for every corpusforge error."""


class ConfigError(CorpusError):
    """The pipeline configuration is missing, unparseable, or out of range."""


class StageInputError(CorpusError):
    """A stage was invoked without the artifacts it depends on."""


class DataError(CorpusError):
    """Base class for data-level failures (malformed inputs, broken invariants)."""


# --- manifest ---------------------------------------------------------------

class MalformedLineError(DataError):
    """A manifest line is not a valid record of the expected schema."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class DuplicateIdError(DataError):
    """An identifier that must be unique appeared twice."""


class InvariantViolationError(DataError):
    """A record breaks one of its declared invariants."""

    def __init__(self, record_id: str, rule: str):
        super().__init__(f"{record_id}: {rule}")
        self.record_id = record_id
        self.rule = rule


class UnknownVideoError(DataError):
    """A segment references a video id absent from the video manifest."""


class NegativeDurationError(DataError):
    """A segment ends at or before its start."""


# --- embedding --------------------------------------------------------------

class BadMagicError(DataError):
    """An embedding file does not start with the expected magic bytes."""


class TruncatedFileError(DataError):
    """An embedding file ended mid-record or carries trailing bytes."""


class ZeroVectorError(DataError):
    """A similarity was requested against a zero-norm vector."""


class DimensionMismatchError(DataError):
    """Vectors of different dimensionality were combined."""


class EmptyInputError(DataError):
    """An aggregate over vectors received an empty collection."""


class ZeroMeanError(DataError):
    """A centroid collapsed to (near) zero norm and cannot be normalized."""


# --- cluster / cleanse / combine ---------------------------------------------

class EmptyTableError(DataError):
    """Clustering was requested on an empty embedding table."""


class MissingEmbeddingError(DataError):
    """An utterance has no embedding in the required table."""


class SingletonClusterError(DataError):
    """Cohesion is undefined for a cluster with fewer than two scored members."""


class UnknownClusterError(DataError):
    """A merge candidate references a cluster id that does not exist."""


# --- genre -------------------------------------------------------------------

class MissingProbsError(DataError):
    """An utterance has no genre probability row."""


class InvalidDistributionError(DataError):
    """Genre probabilities are out of range or do not sum to one."""


# --- evalkit -----------------------------------------------------------------

class NotEnoughSpeakersError(DataError):
    """The requested test split needs more speakers than the corpus holds."""


class InsufficientUtterancesError(DataError):
    """Trial generation asked for more pairs than the pool can provide."""


class NoCrossGenreSpeakersError(DataError):
    """No speaker in the pool has utterances in two or more genres."""


class DegenerateLabelsError(DataError):
    """EER needs at least one target and one nontarget score."""


class InsufficientGenreCoverageError(DataError):
    """A genre matrix cell cannot be populated from the available pool."""
