"""
Error types for Phase HMM

Every failure raised by the library derives from PhaseHmmError. The CLI
maps ValidationError to exit code 2 and everything else to exit code 1.
"""
from typing import Optional


class PhaseHmmError(ValueError):
    """Base class for all library errors."""


class ValidationError(PhaseHmmError):
    """Bad input, bad flags or a broken contract (exit code 2)."""


class RuntimeFailure(PhaseHmmError):
    """Failure while computing on valid input (exit code 1)."""


class LengthMismatchError(ValidationError):
    pass


class FpsMismatchError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class EmptySequenceError(ValidationError):
    pass


class InvariantViolationError(ValidationError):
    pass


class RaggedRowsError(ValidationError):
    pass


class NonContiguousFramesError(ValidationError):
    pass


class UnseenStateError(ValidationError):
    """A state has no assigned frame in the training data."""

    def __init__(self, state: int):
        self.state = state
        super().__init__(f"UnseenState({state}): no training frame is labeled with state {state}")


class ParseError(ValidationError):
    """A file could not be parsed; carries the path and 1-based line if known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class PairingError(ValidationError):
    """A feature/label (or pred/gt) file has no partner with the same stem."""

    def __init__(self, stem: str, missing: str):
        self.stem = stem
        super().__init__(f"no {missing} file for stem '{stem}'")


class NoFeasiblePathError(RuntimeFailure):
    pass


class DegenerateCovarianceError(RuntimeFailure):
    pass


class IoError(RuntimeFailure):
    pass
