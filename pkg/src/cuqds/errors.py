"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family to a distinct exit code.
"""


class CuqdsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CuqdsError, ValueError):
    """Invalid configuration or arguments."""


class DataError(CuqdsError, ValueError):
    """Malformed, inconsistent or missing data."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """Records parse but their shapes disagree."""


class StreamOrderError(DataError):
    """Timestamps of a stream are not strictly increasing."""


class NumericError(CuqdsError, ArithmeticError):
    """Non-finite values or failed factorizations."""
