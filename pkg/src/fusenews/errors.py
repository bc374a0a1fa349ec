"""Exception hierarchy shared across the package.

Every error raised by fusenews derives from :class:`FuseNewsError` so that
callers (in particular the CLI) can map failure classes onto stable exit
codes without string matching.
"""

from __future__ import annotations


class FuseNewsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FuseNewsError):
    """Shapes of operands do not agree."""


class NonFiniteError(FuseNewsError):
    """A value that must be finite is NaN or infinite."""


class InputFormatError(FuseNewsError):
    """An input file (dataset CSV, lexicon, config, embedding file) is malformed.

    Carries the offending path and, where known, the 1-based line number.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
            if line is not None:
                prefix = f"{path}:{line}: "
        super().__init__(prefix + message)


class MissingFileError(InputFormatError):
    """A required input file does not exist."""


class DegenerateDataError(FuseNewsError):
    """The data cannot support the requested operation (single class, too few samples)."""


class WeightsFormatError(FuseNewsError):
    """A weights file is corrupted or incompatible with the requested use.

    ``field`` names the header field or parameter block that failed validation.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"weights field '{field}': {message}"
        super().__init__(message)


class NotTrainedError(FuseNewsError):
    """The model lacks fitted state (normalization stats, vocab) required here."""


class ExplainModeError(FuseNewsError):
    """The requested explanation is unavailable for this model configuration."""
