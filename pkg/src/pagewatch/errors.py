"""Exception types shared across the package."""


class PagewatchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PagewatchError):
    """An argument violates an operation's preconditions."""


class UndefinedMetricError(PagewatchError):
    """A metric is mathematically undefined for the given input."""


class OcrEngineError(PagewatchError):
    """An OCR engine failed on a strip; carries the strip index."""

    def __init__(self, message: str, strip_index: int):
        super().__init__(message)
        self.strip_index = strip_index


class TrainingDivergedError(PagewatchError):
    """Training produced a non-finite loss."""


class NotFoundError(PagewatchError):
    """A referenced entity (verdict id, held value, ...) does not exist."""


class FileParseError(PagewatchError):
    """A structured input file is malformed; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class CheckpointError(PagewatchError):
    """A model checkpoint is unreadable or inconsistent."""
