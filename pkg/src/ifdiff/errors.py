"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (see ``ifdiff.cli``).
"""


class IfdiffError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(IfdiffError, ValueError):
    pass


class InvalidConfigError(IfdiffError, ValueError):
    pass


class InvalidDataError(IfdiffError, ValueError):
    pass


class ParseError(InvalidDataError):
    """Malformed corpus or config file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidStepError(IfdiffError, ValueError):
    pass


class ContractViolation(IfdiffError, RuntimeError):
    pass


class CheckpointError(IfdiffError, ValueError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class NumericFailure(IfdiffError, ArithmeticError):
    """A loss or metric became non-finite. ``state`` carries a diagnostic dump."""

    def __init__(self, message, state=None):
        self.state = state or {}
        super().__init__(message)


class IncompatibleError(InvalidDataError):
    """Checkpoint, corpus and config disagree on grid dimensions."""
