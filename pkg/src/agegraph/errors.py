class AgeGraphError(Exception):
    """Base class for errors raised by agegraph."""


class DataError(AgeGraphError, ValueError):
    """Input data is inconsistent with what an operation needs."""


class ParseError(DataError):
    """A line of a text input could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InvariantViolation(AgeGraphError, AssertionError):
    """An internal consistency check failed."""
