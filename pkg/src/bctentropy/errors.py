"""Exception hierarchy.

Every error raised deliberately by the package derives from ``BCTError``.
The ``exit_code`` attribute is what the command-line frontend returns.
"""


class BCTError(Exception):
    exit_code = 3


class UsageError(BCTError):
    exit_code = 2


class DataError(BCTError):
    exit_code = 3


class AlphabetError(DataError):
    """A symbol lies outside ``0..m-1``."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class EmptyInputError(DataError):
    pass


class IngestionError(DataError):
    pass


class ContextError(DataError):
    pass


class SpecParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BlockLengthError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class InsufficientSampleError(DataError):
    pass


class FixtureError(UsageError):
    pass


class DegenerateChainError(DataError):
    """Exact stationary solve refused: some transition probability is zero."""


class BudgetError(BCTError):
    """Requested work exceeds a configured size or memory budget."""

    exit_code = 4
