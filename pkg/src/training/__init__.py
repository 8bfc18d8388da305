"""Loss, BPTT gradients, gradient checking and the training loop."""

from .bptt import BPTTResult, bptt, mse
from .gradcheck import GradcheckReport, compare_gradients, run_gradcheck
from .trainer import (
    EpochRecord,
    TrainedModel,
    TrainingConfig,
    closed_loop_errors,
    continue_training,
    open_loop_errors,
    train,
)

__all__ = [
    "BPTTResult",
    "bptt",
    "mse",
    "GradcheckReport",
    "compare_gradients",
    "run_gradcheck",
    "EpochRecord",
    "TrainedModel",
    "TrainingConfig",
    "closed_loop_errors",
    "continue_training",
    "open_loop_errors",
    "train",
]
