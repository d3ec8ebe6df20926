"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: format errors are data errors (2),
precondition errors are caller mistakes on valid data (3).
"""


class MelopprError(Exception):
    """Base class for every error raised by this package."""


class GraphFormatError(MelopprError, ValueError):
    """Malformed edge list or binary graph cache."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PreconditionError(MelopprError, ValueError):
    """An argument violates an operation's precondition."""


class DanglingSeedError(PreconditionError):
    pass


class OracleCapError(PreconditionError):
    pass


class ScheduleExhausted(PreconditionError):
    pass


class InvariantViolation(MelopprError, AssertionError):
    """Internal consistency check failed; indicates a bug, not bad input."""
