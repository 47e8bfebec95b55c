"""Exception hierarchy. CLI exit codes key off these classes."""


class ParaRankError(Exception):
    """Base class for all library errors."""


class FormatError(ParaRankError, ValueError):
    """Malformed input data (embedding files, corpora, QA files, persisted artifacts)."""


class IngestionError(FormatError):
    pass


class IndexFormatError(FormatError):
    pass


class CheckpointError(FormatError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class CorruptHeaderError(CheckpointError):
    pass


class TruncatedDataError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class UnknownScorerError(CheckpointError):
    pass


class NumericError(ParaRankError, ArithmeticError):
    """Non-finite values encountered during training or scoring."""
