"""
Activation traces collected from rollouts and recognition runs.

A trace keeps the spatial layout of the selected maps, (T, n, h, w), so it
can be split into image quadrants before being flattened for PCA.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from network.dynamics import NetworkState
from utils.errors import DataError, ShapeError

FM = "fm"
CM = "cm"

# Q1 upper-right, Q2 upper-left, Q3 lower-left, Q4 lower-right
QUADRANTS = ("Q1", "Q2", "Q3", "Q4")


@dataclass
class ActivationTrace:
    """Activations of a fixed map selection over time."""

    grids: np.ndarray
    level: int
    kind: str
    indices: List[int] = field(default_factory=list)
    quadrant: Optional[str] = None
    label: str = ""

    def __len__(self) -> int:
        return len(self.grids)

    @property
    def values(self) -> np.ndarray:
        """(T, D) flattened activation vectors."""
        return self.grids.reshape(len(self.grids), -1)


def record_activations(states: Sequence[NetworkState], level: int, kind: str,
                       indices: Optional[Sequence[int]] = None, label: str = "") -> ActivationTrace:
    """
    Collect the activations of one layer's FMs or CMs.

    Args:
        states: Network states, one per step
        level: Layer level (1-based)
        kind: "fm" or "cm"
        indices: Map indices to keep (all maps by default)
        label: Free-form label, usually the primitive or stream name

    Returns:
        ActivationTrace
    """
    if kind not in (FM, CM):
        raise DataError(f"Map kind must be '{FM}' or '{CM}', got '{kind}'")
    if not states:
        raise DataError("No states to record")
    i = level - 1
    source = [s.f[i] if kind == FM else s.c[i] for s in states]
    grids = np.stack(source)
    if indices is None:
        indices = list(range(grids.shape[1]))
    grids = grids[:, list(indices)]
    return ActivationTrace(grids=grids, level=level, kind=kind, indices=list(indices), label=label)


def quadrant_split(trace: ActivationTrace) -> Dict[str, ActivationTrace]:
    """Split every map of a trace into its four image quadrants."""
    h, w = trace.grids.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"Quadrant split needs even map dimensions, got {h}x{w}")
    hh, hw = h // 2, w // 2
    regions = {
        "Q1": (slice(0, hh), slice(hw, w)),
        "Q2": (slice(0, hh), slice(0, hw)),
        "Q3": (slice(hh, h), slice(0, hw)),
        "Q4": (slice(hh, h), slice(hw, w)),
    }
    return {
        name: ActivationTrace(grids=trace.grids[..., rows, cols].copy(), level=trace.level,
                              kind=trace.kind, indices=list(trace.indices), quadrant=name,
                              label=trace.label)
        for name, (rows, cols) in regions.items()
    }


def merge_quadrants(parts: Dict[str, ActivationTrace]) -> ActivationTrace:
    """Inverse of quadrant_split."""
    missing = [q for q in QUADRANTS if q not in parts]
    if missing:
        raise DataError(f"Missing quadrants: {missing}")
    top = np.concatenate([parts["Q2"].grids, parts["Q1"].grids], axis=-1)
    bottom = np.concatenate([parts["Q3"].grids, parts["Q4"].grids], axis=-1)
    first = parts["Q1"]
    return ActivationTrace(grids=np.concatenate([top, bottom], axis=-2), level=first.level,
                           kind=first.kind, indices=list(first.indices), label=first.label)


def stack_traces(traces: Sequence[ActivationTrace]) -> np.ndarray:
    """Concatenate flattened traces along time for a shared PCA fit."""
    if not traces:
        raise DataError("No traces to stack")
    widths = {t.values.shape[1] for t in traces}
    if len(widths) != 1:
        raise ShapeError(f"Traces have different dimensionality: {sorted(widths)}")
    return np.concatenate([t.values for t in traces], axis=0)


def layer_activity(states: Sequence[NetworkState]) -> Dict[str, np.ndarray]:
    """Mean absolute FM and CM activation per layer and step, keyed 'fm1', 'cm1', ..."""
    if not states:
        return {}
    out: Dict[str, np.ndarray] = {}
    for i in range(len(states[0].f)):
        out[f"fm{i + 1}"] = np.array([np.mean(np.abs(s.f[i])) for s in states])
        out[f"cm{i + 1}"] = np.array([np.mean(np.abs(s.c[i])) if s.c[i].size else 0.0 for s in states])
    return out
