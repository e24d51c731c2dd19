"""Exception types raised across the pipeline.

Every error derives from :class:`AffectCuesError` so callers (and the CLI)
can catch pipeline failures in one place while still matching specific
conditions in tests.
"""

from __future__ import annotations


class AffectCuesError(Exception):
    """Base class for all pipeline errors."""


# ---------- ingest ----------
class EmptyFileError(AffectCuesError):
    pass


class MissingColumnError(AffectCuesError):
    def __init__(self, name: str):
        super().__init__(f"missing column {name!r}")
        self.name = name


class RowLengthMismatchError(AffectCuesError):
    def __init__(self, row: int, expected: int, got: int):
        super().__init__(f"row {row}: expected {expected} cells, got {got}")
        self.row = row


class NonNumericCellError(AffectCuesError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: non-numeric cell {value!r}")
        self.row = row
        self.column = column


class AllFramesInvalidError(AffectCuesError):
    def __init__(self, channel: str):
        super().__init__(f"channel {channel!r} has no valid frame")
        self.channel = channel


class UnknownSubjectError(AffectCuesError):
    pass


class UnknownChannelError(AffectCuesError):
    pass


class LengthMismatchError(AffectCuesError):
    pass


class NonBinaryValueError(AffectCuesError):
    pass


# ---------- lld ----------
class BinaryChannelNotAllowedError(AffectCuesError):
    pass


# ---------- functionals / wavelet ----------
class WindowTooShortError(AffectCuesError):
    pass


class SeriesTooShortError(AffectCuesError):
    pass


class WindowShorterThanFilterError(AffectCuesError):
    pass


class TooManyLevelsError(AffectCuesError):
    pass


# ---------- alignment ----------
class DelayNotFrameAlignedError(AffectCuesError):
    pass


class TooFewRowsError(AffectCuesError):
    pass


class ColumnCountMismatchError(AffectCuesError):
    pass


# ---------- selection / metrics ----------
class TooFewSamplesError(AffectCuesError):
    pass


class AllFeaturesDroppedError(AffectCuesError):
    pass


class ConstantInputError(AffectCuesError):
    pass


# ---------- model ----------
class ShapeMismatchError(AffectCuesError):
    pass


class DivergedToNonFiniteError(AffectCuesError):
    pass


# ---------- cli ----------
class ConfigError(AffectCuesError):
    pass


class ExperimentError(AffectCuesError):
    """A sweep step failed; the message names the configuration tuple."""
