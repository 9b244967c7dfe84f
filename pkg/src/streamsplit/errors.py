"""Exception hierarchy. The CLI maps each class to an exit code."""


class StreamSplitError(Exception):
    exit_code = 1


class InputError(StreamSplitError, ValueError):
    """Malformed input record, out-of-domain value, or bad parameter."""

    exit_code = 2


class GuardViolation(StreamSplitError):
    """A hard size guard was exceeded (e.g. categorical enumeration over too many categories)."""

    exit_code = 3


class BudgetViolation(StreamSplitError):
    """An MPC machine exceeded its memory budget. Carries the ledger for inspection."""

    exit_code = 3

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class GuaranteeViolation(StreamSplitError):
    exit_code = 4
