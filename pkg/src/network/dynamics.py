"""
Forward dynamics: leaky-integrator FM/CM updates, the pixel output head and
open/closed-loop rollouts.

All layers are updated synchronously: state t is computed from the
activations of state t-1 only, except that layer 1 also reads the input
frame presented at step t.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from network.architecture import ArchitectureSpec
from network.grid_math import conv_maps, replicate, scaled_tanh
from network.params import NetworkParams
from utils.errors import DataError, ShapeError

OPEN = "open"
CLOSED = "closed"
MODES = (OPEN, CLOSED)


@dataclass
class IntentionState:
    """Internal states of every FM and CM at a rollout's step 0."""

    f_hat: List[np.ndarray]
    c_hat: List[np.ndarray]

    @classmethod
    def zeros(cls, arch: ArchitectureSpec) -> "IntentionState":
        return cls(
            f_hat=[np.zeros((s.num_fm,) + s.fm_size) for s in arch.layers],
            c_hat=[np.zeros((s.num_cm,) + s.cm_size) for s in arch.layers],
        )

    def arrays(self) -> List[np.ndarray]:
        return list(self.f_hat) + list(self.c_hat)

    def copy(self) -> "IntentionState":
        return IntentionState([a.copy() for a in self.f_hat], [a.copy() for a in self.c_hat])

    def zeros_like(self) -> "IntentionState":
        return IntentionState([np.zeros_like(a) for a in self.f_hat], [np.zeros_like(a) for a in self.c_hat])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def add_scaled(self, other: "IntentionState", scale: float) -> "IntentionState":
        """Return self + scale * other."""
        return IntentionState(
            [a + scale * b for a, b in zip(self.f_hat, other.f_hat)],
            [a + scale * b for a, b in zip(self.c_hat, other.c_hat)],
        )

    def max_abs_diff(self, other: "IntentionState") -> float:
        diffs = [np.max(np.abs(a - b)) if a.size else 0.0 for a, b in zip(self.arrays(), other.arrays())]
        return float(max(diffs)) if diffs else 0.0

    def check_against(self, arch: ArchitectureSpec):
        if len(self.f_hat) != arch.num_layers or len(self.c_hat) != arch.num_layers:
            raise ShapeError("Intention layer count does not match the architecture")
        for spec, f, c in zip(arch.layers, self.f_hat, self.c_hat):
            if f.shape != (spec.num_fm,) + spec.fm_size or c.shape != (spec.num_cm,) + spec.cm_size:
                raise ShapeError(f"Intention shapes for layer {spec.level} do not match the architecture")


@dataclass
class NetworkState:
    """Internal states and activations of all maps at one time step."""

    f_hat: List[np.ndarray]
    f: List[np.ndarray]
    c_hat: List[np.ndarray]
    c: List[np.ndarray]
    o_hat: Optional[np.ndarray] = None
    o: Optional[np.ndarray] = None

    @classmethod
    def from_intention(cls, intention: IntentionState) -> "NetworkState":
        return cls(
            f_hat=[a.copy() for a in intention.f_hat],
            f=[scaled_tanh(a) for a in intention.f_hat],
            c_hat=[a.copy() for a in intention.c_hat],
            c=[scaled_tanh(a) for a in intention.c_hat],
        )

    def intention(self) -> IntentionState:
        """Internal-state portion, usable as the step-0 state of another rollout."""
        return IntentionState([a.copy() for a in self.f_hat], [a.copy() for a in self.c_hat])


def fm_step(level: int, prev: NetworkState, frame: Optional[np.ndarray],
            params: NetworkParams, arch: ArchitectureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Leaky-integrator update of every FM in one layer.

    Args:
        level: Layer level (1-based)
        prev: State at t-1
        frame: Input frame at t (layer 1 only)
        params: Network parameters
        arch: Network architecture

    Returns:
        Tuple of (internal states, activations), each (Q_l, h, w)
    """
    spec = arch.layer(level)
    i = level - 1
    h, w = spec.fm_size
    drive = conv_maps(prev.c[i], params[f"k_cf/{level}"], h, w)
    if level < arch.num_layers:
        drive += conv_maps(prev.f[i + 1], params[f"k_ff/{level}"], h, w)
    if level == 1:
        if frame is None:
            raise ShapeError("Layer 1 needs an input frame")
        drive += conv_maps(np.asarray(frame, dtype=np.float64)[None], params["k_if"], h, w)
    drive += params[f"b_fm/{level}"][:, None, None]
    decay = 1.0 - 1.0 / spec.tau
    f_hat = decay * prev.f_hat[i] + drive / spec.tau
    return f_hat, scaled_tanh(f_hat)


def cm_step(level: int, prev: NetworkState, frame: Optional[np.ndarray],
            params: NetworkParams, arch: ArchitectureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Leaky-integrator update of every CM in one layer.

    Args:
        level: Layer level (1-based)
        prev: State at t-1
        frame: Input frame at t, the bottom-up source of layer-1 CMs
        params: Network parameters
        arch: Network architecture

    Returns:
        Tuple of (internal states, activations), each (N_l, h, w)
    """
    spec = arch.layer(level)
    i = level - 1
    h, w = spec.cm_size
    drive = np.einsum("mnhw,nhw->mhw", params[f"W_cc/{level}"], prev.c[i])
    if level < arch.num_layers:
        top_down = np.einsum("mqhw,qhw->mhw", params[f"W_fc/{level}"], prev.f[i + 1])
        drive += replicate(top_down, h, w)
    if level == 1:
        if frame is None:
            raise ShapeError("Layer 1 needs an input frame")
        lower = np.asarray(frame, dtype=np.float64)[None]
    else:
        lower = prev.f[i - 1]
    drive += conv_maps(lower, params[f"k_fc/{level}"], h, w)
    drive += params[f"b_cm/{level}"][:, None, None]
    decay = 1.0 - 1.0 / spec.tau
    c_hat = decay * prev.c_hat[i] + drive / spec.tau
    return c_hat, scaled_tanh(c_hat)


def output_step(f1: np.ndarray, params: NetworkParams, arch: ArchitectureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pixel output head from layer-1 FM activations.

    Returns:
        Tuple of (internal output, activated output), each input_size
    """
    h, w = arch.input_size
    o_hat = conv_maps(f1, params["k_fo"], h, w)[0] + params["b_o"][0]
    return o_hat, scaled_tanh(o_hat)


def step(prev: NetworkState, frame: np.ndarray, params: NetworkParams, arch: ArchitectureSpec) -> NetworkState:
    """Advance every layer and the output head by one time step."""
    f_hat, f, c_hat, c = [], [], [], []
    for level in range(1, arch.num_layers + 1):
        fh, fa = fm_step(level, prev, frame, params, arch)
        ch, ca = cm_step(level, prev, frame, params, arch)
        f_hat.append(fh)
        f.append(fa)
        c_hat.append(ch)
        c.append(ca)
    o_hat, o = output_step(f[0], params, arch)
    return NetworkState(f_hat=f_hat, f=f, c_hat=c_hat, c=c, o_hat=o_hat, o=o)


def rollout(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState, mode: str,
            inputs: Optional[np.ndarray], steps: int, record_trace: bool = True
            ) -> Tuple[np.ndarray, List[NetworkState]]:
    """
    Deterministic open- or closed-loop generation.

    Open loop feeds inputs[t-1] at step t. Closed loop feeds inputs[0] at
    step 1 and the previous output afterwards. Output t predicts frame t+1.

    Args:
        params: Network parameters (read only)
        arch: Network architecture
        intention: Step-0 internal states
        mode: "open" or "closed"
        inputs: (>= steps, H, W) frames for open loop, (>= 1, H, W) for closed loop
        steps: Number of steps T
        record_trace: Keep every NetworkState (otherwise only the last one)

    Returns:
        Tuple of (outputs (T, H, W), trace starting with the intention state)
    """
    if mode not in MODES:
        raise ValueError(f"Unknown rollout mode: {mode}")
    if steps < 0:
        raise DataError("Rollout length must be non-negative")
    h, w = arch.input_size
    if steps > 0:
        if inputs is None:
            raise DataError("Rollout needs input frames")
        inputs = np.asarray(inputs, dtype=np.float64)
        needed = steps if mode == OPEN else 1
        if inputs.ndim != 3 or len(inputs) < needed:
            raise DataError(f"{mode}-loop rollout of {steps} steps needs at least {needed} input frames")
        if inputs.shape[1:] != (h, w):
            raise ShapeError(f"Frames are {inputs.shape[1:]}, architecture expects {(h, w)}")

    state = NetworkState.from_intention(intention)
    trace = [state]
    outputs = np.zeros((steps, h, w))
    for t in range(steps):
        if mode == OPEN or t == 0:
            frame = inputs[t]
        else:
            frame = outputs[t - 1]
        state = step(state, frame, params, arch)
        outputs[t] = state.o
        if record_trace:
            trace.append(state)
    if not record_trace and steps > 0:
        trace.append(state)
    return outputs, trace
