"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class GTransError(Exception):
    """Base class for all library errors."""

    exit_code = 5

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), **self.context}


class UsageError(GTransError):
    exit_code = 2


class InputError(GTransError):
    """Malformed or unreadable input data, or arguments outside a domain."""

    exit_code = 3


class UnknownGraphonError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class InvalidShiftError(InputError):
    pass


class TooFewNodesError(InputError):
    pass


class DimensionMismatchError(InputError):
    pass


class InfeasibleMarginalsError(InputError):
    pass


class DegenerateColumnError(GTransError):
    """A coupling column has zero mass, so it cannot be normalized."""

    exit_code = 4


class ConvergenceError(GTransError):
    exit_code = 4


class UndefinedAUCError(InputError):
    pass


class InvalidRankError(InputError):
    pass


class StageError(GTransError):
    """Wraps an error raised inside one stage of the transfer pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}", stage=stage)
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 5)
