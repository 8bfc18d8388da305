"""
Exception hierarchy for the P-MSTRNN toolkit.

Every error carries the exit code the CLI reports for it, so callers
deep inside the library never need to know about process exit status.
"""

from typing import List, Optional


class PMSTRNNError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(PMSTRNNError, ValueError):
    """Malformed or unknown run-configuration content."""

    exit_code = 3


class ShapeError(PMSTRNNError, ValueError):
    """Incompatible map shapes or an inconsistent architecture."""

    exit_code = 3


class DataError(PMSTRNNError, ValueError):
    """Empty datasets, length mismatches and unusable sequences."""

    exit_code = 4


class MissingFileError(PMSTRNNError, FileNotFoundError):
    """A required input file does not exist."""

    exit_code = 5


class CheckpointError(PMSTRNNError):
    """Corrupt, truncated or foreign checkpoint / container files."""

    exit_code = 6


class VersionMismatchError(CheckpointError):
    """A file was written by an incompatible format version."""

    exit_code = 7


class NumericalFailureError(PMSTRNNError, ArithmeticError):
    """Non-finite values appeared during a forward or backward pass."""

    exit_code = 8

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class TrainingDivergedError(NumericalFailureError):
    """Training loss became non-finite; the partial log is attached."""

    def __init__(self, message: str, log: Optional[List] = None, step: Optional[int] = None):
        super().__init__(message, step=step)
        self.log = log or []


class GradcheckFailure(PMSTRNNError):
    """Analytic gradients disagree with finite differences."""

    exit_code = 9
