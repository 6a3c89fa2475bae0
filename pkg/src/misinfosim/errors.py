"""Shared exception types."""


class ParameterError(ValueError):
    """An input value violates a documented precondition."""


class StateError(RuntimeError):
    """An operation was applied to an object in the wrong state."""


class SingularDesignError(ValueError):
    """A regression design matrix is rank deficient.

    Carries the name of the first offending column.
    """

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design matrix is rank deficient at column {column!r}")


class RecordParseError(ValueError):
    """A persisted record file contains a malformed row."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class SweepError(RuntimeError):
    """A sweep run failed; identifies the failing condition."""
