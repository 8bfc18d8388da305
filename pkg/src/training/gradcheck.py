"""
Finite-difference gradient oracle for the BPTT implementation.

Every scalar of every parameter tensor and of the intention state is
perturbed by +-h and the central difference of the sequence MSE is compared
with the analytic gradient, tensor by tensor.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from network.architecture import ArchitectureSpec
from network.dynamics import CLOSED, OPEN, IntentionState, rollout
from network.params import NetworkParams, param_layout
from training.bptt import bptt, mse


def sequence_loss(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
                  sequence: np.ndarray, mode: str) -> float:
    """One-step-ahead MSE of a sequence without gradients."""
    outputs, _ = rollout(params, arch, intention, mode, sequence, len(sequence) - 1, record_trace=False)
    return mse(outputs, sequence[1:])


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Tensor-wise relative error: max |a - n| / max(max|a|, max|n|, floor)."""
    if analytic.size == 0:
        return 0.0
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _central_difference(array: np.ndarray, loss_fn, h: float) -> np.ndarray:
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        saved = array[index]
        array[index] = saved + h
        plus = loss_fn()
        array[index] = saved - h
        minus = loss_fn()
        array[index] = saved
        grad[index] = (plus - minus) / (2.0 * h)
    return grad


def numerical_gradients(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
                        sequence: np.ndarray, mode: str, h: float = 1e-5
                        ) -> Tuple[NetworkParams, IntentionState]:
    """
    Central-difference gradients for every parameter and intention scalar.

    The inputs are perturbed in place and restored afterwards.
    """
    loss_fn = lambda: sequence_loss(params, arch, intention, sequence, mode)
    param_grads = NetworkParams({
        name: _central_difference(value, loss_fn, h) for name, value in params.items()
    })
    intention_grads = IntentionState(
        f_hat=[_central_difference(a, loss_fn, h) for a in intention.f_hat],
        c_hat=[_central_difference(a, loss_fn, h) for a in intention.c_hat],
    )
    return param_grads, intention_grads


def compare_gradients(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
                      sequence: np.ndarray, mode: str, h: float = 1e-5) -> Dict[str, float]:
    """
    Relative error of every analytic gradient tensor against finite differences.

    Returns:
        Dict mapping tensor names (parameters, then intention/f_hat/l, intention/c_hat/l)
        to relative errors
    """
    analytic = bptt(params, arch, intention, sequence, mode)
    numeric_params, numeric_intention = numerical_gradients(params, arch, intention, sequence, mode, h)
    errors = {
        name: relative_error(analytic.param_grads[name], numeric_params[name])
        for name in params.names()
    }
    for level in range(1, arch.num_layers + 1):
        i = level - 1
        errors[f"intention/f_hat/{level}"] = relative_error(
            analytic.intention_grad.f_hat[i], numeric_intention.f_hat[i])
        errors[f"intention/c_hat/{level}"] = relative_error(
            analytic.intention_grad.c_hat[i], numeric_intention.c_hat[i])
    return errors


def random_case(arch: ArchitectureSpec, steps: int, rng: np.random.Generator,
                scale: float = 0.5) -> Tuple[NetworkParams, IntentionState, np.ndarray]:
    """Random parameters (biases included), intention and target sequence."""
    params = NetworkParams({
        name: rng.uniform(-scale, scale, size=shape) for name, shape, _ in param_layout(arch)
    })
    zero = IntentionState.zeros(arch)
    intention = IntentionState(
        f_hat=[rng.uniform(-1.0, 1.0, size=a.shape) for a in zero.f_hat],
        c_hat=[rng.uniform(-1.0, 1.0, size=a.shape) for a in zero.c_hat],
    )
    sequence = rng.uniform(-1.0, 1.0, size=(steps,) + tuple(arch.input_size))
    return params, intention, sequence


@dataclass
class GradcheckReport:
    """Worst relative error per tensor across all trials and modes."""

    tolerance: float
    trials: int
    max_errors: Dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_errors.values()) if self.max_errors else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def failures(self) -> List[str]:
        return [name for name, err in self.max_errors.items() if err > self.tolerance]

    def format_summary(self) -> str:
        lines = [
            "=" * 60,
            f"GRADCHECK ({self.trials} trials, tolerance {self.tolerance:g})",
            "=" * 60,
        ]
        for name, err in self.max_errors.items():
            mark = "✓" if err <= self.tolerance else "✗"
            lines.append(f"  {mark} {name:24s} {err:.3e}")
        lines.append(f"Worst relative error: {self.worst:.3e}")
        lines.append("=" * 60)
        return "\n".join(lines)


def run_gradcheck(arch: ArchitectureSpec, trials: int = 20, steps: int = 5, seed: int = 0,
                  modes: Tuple[str, ...] = (OPEN, CLOSED), h: float = 1e-5,
                  tolerance: float = 1e-4, verbose: bool = False) -> GradcheckReport:
    """
    Compare BPTT against finite differences on random networks.

    Args:
        arch: (Micro) architecture to test
        trials: Number of random networks
        steps: Sequence length T
        seed: RNG seed
        modes: Rollout modes to check
        h: Finite-difference step
        tolerance: Maximum accepted relative error
        verbose: Print per-trial progress

    Returns:
        GradcheckReport
    """
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance, trials=trials)
    for trial in range(trials):
        params, intention, sequence = random_case(arch, steps, rng)
        for mode in modes:
            errors = compare_gradients(params, arch, intention, sequence, mode, h)
            for name, err in errors.items():
                key = f"{mode}:{name}"
                report.max_errors[key] = max(report.max_errors.get(key, 0.0), err)
        if verbose:
            print(f"[Gradcheck] trial {trial + 1}/{trials}: worst so far {report.worst:.3e}")
    return report
