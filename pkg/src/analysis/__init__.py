"""Activation recording, PCA and trajectory statistics."""

from .activations import (
    CM,
    FM,
    QUADRANTS,
    ActivationTrace,
    layer_activity,
    merge_quadrants,
    quadrant_split,
    record_activations,
    stack_traces,
)
from .pca import PCAModel, fit_pca, pca
from .metrics import convergence, cyclicity, lag_difference, step_displacements, trajectory_distance

__all__ = [
    "CM",
    "FM",
    "QUADRANTS",
    "ActivationTrace",
    "layer_activity",
    "merge_quadrants",
    "quadrant_split",
    "record_activations",
    "stack_traces",
    "PCAModel",
    "fit_pca",
    "pca",
    "convergence",
    "cyclicity",
    "lag_difference",
    "step_displacements",
    "trajectory_distance",
]
