"""Exception hierarchy shared by every pipeline stage.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericError`` -> 3.
"""


class TTSFrontError(Exception):
    """Base class for all package errors."""


class DataError(TTSFrontError):
    """Missing, inconsistent or malformed input data."""


class FormatError(DataError):
    """A binary or text file does not follow its declared format."""


class TextGridError(FormatError):
    """TextGrid parse failure, carrying the 1-based line number."""

    def __init__(self, message: str, line: int, path=None):
        where = f"{path}: line {line}" if path is not None else f"line {line}"
        super().__init__(f"{where}: {message}")
        self.message = message
        self.line = line


class NumericError(TTSFrontError):
    """Non-finite values or a failed gradient check."""
