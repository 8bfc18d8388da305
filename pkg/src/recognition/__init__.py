"""Online recognition by sliding-window error regression, and the entrainment baseline."""

from .error_regression import (
    RecognitionTrace,
    RegressionConfig,
    WindowResult,
    entrainment_stream,
    recognize_stream,
    recognize_streams,
    regress_window,
)

__all__ = [
    "RecognitionTrace",
    "RegressionConfig",
    "WindowResult",
    "entrainment_stream",
    "recognize_stream",
    "recognize_streams",
    "regress_window",
]
