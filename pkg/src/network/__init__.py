"""Network core: grid arithmetic, architecture, parameters and dynamics."""

from .architecture import ArchitectureSpec, LayerSpec, default_architecture
from .params import NetworkParams, init_params, param_layout
from .dynamics import (
    CLOSED,
    OPEN,
    IntentionState,
    NetworkState,
    cm_step,
    fm_step,
    output_step,
    rollout,
)

__all__ = [
    "ArchitectureSpec",
    "LayerSpec",
    "default_architecture",
    "NetworkParams",
    "init_params",
    "param_layout",
    "IntentionState",
    "NetworkState",
    "OPEN",
    "CLOSED",
    "fm_step",
    "cm_step",
    "output_step",
    "rollout",
]
