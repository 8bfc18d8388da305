"""
Imitative synchronization by error regression.

At every step of an incoming stream the network reconstructs the last w
frames by closed-loop generation from the window-initial internal states
(the intention), back-propagates the reconstruction error to those states
only, and updates them with weights and biases frozen. The optimized
intention is then rolled forward to predict the next frame and the window
shifts by one step.

Entrainment is the non-adaptive baseline: the stream is fed step by step
through an open-loop pass from a fixed intention.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from network.architecture import ArchitectureSpec
from network.dynamics import CLOSED, OPEN, IntentionState, NetworkState, rollout
from network.params import NetworkParams
from training.bptt import bptt, mse
from utils.errors import ConfigError, DataError, NumericalFailureError


@dataclass
class RegressionConfig:
    """Sliding-window error-regression settings."""

    window: int = 30
    rate: float = 0.1
    iters_per_step: int = 30
    early_stop_mse: float = 1e-4
    open_loop_window: bool = False
    verbose: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("regression.window must be >= 1")
        if self.rate < 0:
            raise ConfigError("regression.rate must be >= 0")
        if self.iters_per_step < 1:
            raise ConfigError("regression.iters_per_step must be >= 1")

    @property
    def mode(self) -> str:
        return OPEN if self.open_loop_window else CLOSED


@dataclass
class WindowResult:
    """Outcome of one window regression."""

    intention: IntentionState
    reconstruction_mse: float
    initial_mse: float
    error_curve: List[float] = field(default_factory=list)
    reset: bool = False


@dataclass
class RecognitionTrace:
    """Per-step record of a recognized stream; entry t predicts frame t+1."""

    predictions: np.ndarray
    step_mse: np.ndarray
    window_mse: List[float] = field(default_factory=list)
    intentions: List[IntentionState] = field(default_factory=list)
    error_curves: List[List[float]] = field(default_factory=list)
    states: List[NetworkState] = field(default_factory=list)
    resets: int = 0

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.step_mse)) if len(self.step_mse) else 0.0


def _window_loss(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
                 history: np.ndarray, mode: str) -> float:
    outputs, _ = rollout(params, arch, intention, mode, history, len(history) - 1, record_trace=False)
    return mse(outputs, history[1:])


def regress_window(params: NetworkParams, arch: ArchitectureSpec, history: np.ndarray,
                   guess: IntentionState, cfg: RegressionConfig) -> WindowResult:
    """
    Optimize the window-initial intention against an input history.

    Runs up to cfg.iters_per_step gradient steps on the reconstruction MSE
    (output t against history frame t+1) and returns the best iterate seen,
    so the reconstruction error never exceeds that of the guess.

    Args:
        params: Frozen network parameters
        arch: Network architecture
        history: (w, H, W) most recent frames, oldest first
        guess: Starting intention
        cfg: Regression settings

    Returns:
        WindowResult
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 3 or len(history) < 1:
        raise DataError("History must hold at least one frame")
    if len(history) < 2:
        return WindowResult(intention=guess.copy(), reconstruction_mse=0.0, initial_mse=0.0)

    intention = guess.copy()
    best, best_loss = intention, None
    curve: List[float] = []
    reset = False

    for _ in range(cfg.iters_per_step):
        try:
            result = bptt(params, arch, intention, history, cfg.mode, wrt_params=False)
        except NumericalFailureError:
            reset = True
            break
        curve.append(result.loss)
        if best_loss is None or result.loss < best_loss:
            best, best_loss = intention, result.loss
        if result.loss < cfg.early_stop_mse or cfg.rate == 0:
            break
        candidate = intention.add_scaled(result.intention_grad, -cfg.rate)
        if not candidate.is_finite():
            reset = True
            break
        intention = candidate
    else:
        final_loss = _window_loss(params, arch, intention, history, cfg.mode)
        if np.isfinite(final_loss):
            curve.append(final_loss)
            if best_loss is None or final_loss < best_loss:
                best, best_loss = intention, final_loss

    if best_loss is None:
        best_loss = _window_loss(params, arch, guess, history, cfg.mode)
    if reset and cfg.verbose:
        print("[ErrorRegression] Non-finite intention; reset to last finite iterate")
    return WindowResult(
        intention=best,
        reconstruction_mse=float(best_loss),
        initial_mse=float(curve[0]) if curve else float(best_loss),
        error_curve=curve,
        reset=reset,
    )


def _advance(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
             first_frame: np.ndarray, steps: int) -> IntentionState:
    """Internal state after feeding `first_frame` then feedback for `steps` steps."""
    _, trace = rollout(params, arch, intention, CLOSED, first_frame[None], steps, record_trace=False)
    return trace[-1].intention()


def recognize_stream(params: NetworkParams, arch: ArchitectureSpec, stream: np.ndarray,
                     cfg: RegressionConfig, initial_intention: Optional[IntentionState] = None,
                     record_states: bool = False) -> RecognitionTrace:
    """
    Track a stream by sliding-window error regression.

    At step t (0-based) the window covers frames max(0, t-w+1)..t. The
    regression is warm-started from the previous step's result; when the
    window start advances, that result is first rolled forward one step.

    Args:
        params: Frozen network parameters
        arch: Network architecture
        stream: (T, H, W) incoming frames, T >= 2
        cfg: Regression settings
        initial_intention: Starting guess (zeros by default)
        record_states: Keep the final network state of every step for analysis

    Returns:
        RecognitionTrace with T-1 predictions
    """
    stream = np.asarray(stream, dtype=np.float64)
    if stream.ndim != 3 or len(stream) < 2:
        raise DataError("Recognition needs a stream of at least 2 frames")
    intention = initial_intention.copy() if initial_intention is not None else IntentionState.zeros(arch)
    steps = len(stream) - 1
    trace = RecognitionTrace(predictions=np.zeros((steps,) + stream.shape[1:]), step_mse=np.zeros(steps))
    start = 0

    for t in range(steps):
        new_start = max(0, t - cfg.window + 1)
        if new_start > start:
            intention = _advance(params, arch, intention, stream[start], new_start - start)
            start = new_start
        history = stream[start:t + 1]
        result = regress_window(params, arch, history, intention, cfg)
        intention = result.intention

        outputs, states = rollout(params, arch, intention, cfg.mode, history, len(history),
                                  record_trace=False)
        trace.predictions[t] = outputs[-1]
        trace.step_mse[t] = mse(outputs[-1:], stream[t + 1:t + 2])
        trace.window_mse.append(result.reconstruction_mse)
        trace.intentions.append(intention)
        trace.error_curves.append(result.error_curve)
        trace.resets += int(result.reset)
        if record_states:
            trace.states.append(states[-1])

    if cfg.verbose:
        print(f"[ErrorRegression] {steps} steps, mean prediction MSE {trace.mean_mse:.5f}, "
              f"{trace.resets} resets")
    return trace


def entrainment_stream(params: NetworkParams, arch: ArchitectureSpec, stream: np.ndarray,
                       fixed_intention: Optional[IntentionState] = None,
                       record_states: bool = False) -> RecognitionTrace:
    """
    Non-adaptive baseline: one open-loop pass over the stream.

    Args:
        params: Network parameters
        arch: Network architecture
        stream: (T, H, W) incoming frames, T >= 2
        fixed_intention: Intention used for the whole stream (zeros by default)
        record_states: Keep the network state of every step

    Returns:
        RecognitionTrace with T-1 predictions
    """
    stream = np.asarray(stream, dtype=np.float64)
    if stream.ndim != 3 or len(stream) < 2:
        raise DataError("Entrainment needs a stream of at least 2 frames")
    intention = fixed_intention if fixed_intention is not None else IntentionState.zeros(arch)
    steps = len(stream) - 1
    outputs, states = rollout(params, arch, intention, OPEN, stream, steps, record_trace=record_states)
    step_mse = np.mean((outputs - stream[1:]) ** 2, axis=(1, 2))
    return RecognitionTrace(
        predictions=outputs,
        step_mse=step_mse,
        intentions=[intention],
        states=states[1:] if record_states else [],
    )


def recognize_streams(params: NetworkParams, arch: ArchitectureSpec, streams: Sequence[np.ndarray],
                      cfg: RegressionConfig, initial_intentions: Optional[Sequence[IntentionState]] = None,
                      threads: int = 1, record_states: bool = False) -> List[RecognitionTrace]:
    """
    Recognize several independent streams against shared read-only parameters.

    Streams are spread over at most `threads` workers; traces come back in
    stream order.
    """
    guesses = list(initial_intentions) if initial_intentions is not None else [None] * len(streams)

    def run(k: int) -> RecognitionTrace:
        return recognize_stream(params, arch, streams[k], cfg, guesses[k], record_states=record_states)

    if threads <= 1 or len(streams) <= 1:
        return [run(k) for k in range(len(streams))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(streams))))
