"""Utility modules: error hierarchy and run configuration."""

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GradcheckFailure,
    MissingFileError,
    NumericalFailureError,
    PMSTRNNError,
    ShapeError,
    TrainingDivergedError,
    VersionMismatchError,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "GradcheckFailure",
    "MissingFileError",
    "NumericalFailureError",
    "PMSTRNNError",
    "ShapeError",
    "TrainingDivergedError",
    "VersionMismatchError",
]
