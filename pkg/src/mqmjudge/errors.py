"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
EndpointError -> 3.
"""


class MqmJudgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MqmJudgeError):
    """Invalid configuration or incompatible arguments."""


class DataError(MqmJudgeError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A judge completion could not be parsed under the requested strictness."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class EndpointError(MqmJudgeError):
    """A judge endpoint request failed terminally."""

    def __init__(self, message: str, attempts: list | None = None):
        super().__init__(message)
        self.attempts = attempts or []
