"""Exception hierarchy shared by all modules.

The CLI maps these to exit codes: UsageError -> 1, DataError -> 2, anything
else (including InternalError) -> 3.
"""


class EntrospectError(Exception):
    """Base class for errors raised by this package."""


class UsageError(EntrospectError):
    """Bad command line arguments or malformed configuration."""


class DataError(EntrospectError):
    """Input data violates a documented precondition or format."""


class InternalError(EntrospectError):
    """An internal invariant was violated; indicates a bug, not bad input."""


class TokenizeError(DataError):
    """Unterminated construct while lexing, with file and line context."""

    def __init__(self, message: str, file: str, line_no: int):
        super().__init__(f"{file}:{line_no}: {message}")
        self.file = file
        self.line_no = line_no
