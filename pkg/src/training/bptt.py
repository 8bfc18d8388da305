"""
Mean-squared prediction error and exact reverse-mode gradients through time.

The backward pass mirrors network.dynamics step by step. Gradients flow
through three routes: the leaky decay of every internal state, the
activations read by the next step, and (closed loop only) the output that
is fed back as the next input frame.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from network.architecture import ArchitectureSpec
from network.dynamics import CLOSED, MODES, OPEN, IntentionState, rollout
from network.grid_math import conv_maps_backward, replicate_backward, scaled_tanh_prime_from_activation
from network.params import NetworkParams
from utils.errors import DataError, NumericalFailureError, ShapeError


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """
    Mean over all frames and pixels of the squared difference.

    Args:
        pred: (T, H, W) predicted frames
        target: (T, H, W) target frames

    Returns:
        Mean squared error
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"Sequence shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        return 0.0
    return float(np.mean((pred - target) ** 2))


@dataclass
class BPTTResult:
    """Loss, predictions and gradients from one forward/backward pass."""

    loss: float
    outputs: np.ndarray
    intention_grad: IntentionState
    param_grads: Optional[NetworkParams] = None


def _accumulate(grads: Optional[NetworkParams], name: str, value: Optional[np.ndarray]):
    if grads is not None and value is not None:
        grads.tensors[name] += value


def bptt(params: NetworkParams, arch: ArchitectureSpec, intention: IntentionState,
         sequence: np.ndarray, mode: str = OPEN, wrt_params: bool = True) -> BPTTResult:
    """
    Exact gradients of the one-step-ahead MSE of a sequence.

    Output t is compared with frame t+1, so a length-T sequence gives T-1
    loss terms. In closed loop the first frame is fed at step 1 and outputs
    are fed back afterwards; the feedback path is differentiated.

    Args:
        params: Network parameters
        arch: Network architecture
        intention: Step-0 internal states
        sequence: (T, H, W) frames, T >= 2
        mode: "open" or "closed"
        wrt_params: Also compute parameter gradients (False for error regression)

    Returns:
        BPTTResult
    """
    if mode not in MODES:
        raise ValueError(f"Unknown mode: {mode}")
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3 or len(seq) < 2:
        raise DataError("BPTT needs a sequence of at least 2 frames")
    if seq.shape[1:] != tuple(arch.input_size):
        raise ShapeError(f"Frames are {seq.shape[1:]}, architecture expects {arch.input_size}")

    steps = len(seq) - 1
    outputs, trace = rollout(params, arch, intention, mode, seq, steps)
    bad = np.flatnonzero(~np.isfinite(outputs).reshape(steps, -1).all(axis=1))
    if bad.size:
        raise NumericalFailureError("Non-finite output during forward pass", step=int(bad[0]) + 1)

    diff = outputs - seq[1:]
    loss = float(np.mean(diff ** 2))
    scale = 2.0 / diff.size

    top = arch.num_layers
    specs = arch.layers
    grads = params.zeros_like() if wrt_params else None

    carry_f = [np.zeros_like(a) for a in intention.f_hat]
    carry_c = [np.zeros_like(a) for a in intention.c_hat]
    g_f = [np.zeros_like(a) for a in intention.f_hat]
    g_c = [np.zeros_like(a) for a in intention.c_hat]
    g_fed_back = None

    for t in range(steps, 0, -1):
        cur, prev = trace[t], trace[t - 1]
        frame = seq[t - 1] if (mode == OPEN or t == 1) else outputs[t - 2]
        frame_maps = frame[None]
        frame_grad_needed = mode == CLOSED and t >= 2
        g_frame = np.zeros_like(frame)

        # output head
        g_o = scale * diff[t - 1]
        if g_fed_back is not None:
            g_o = g_o + g_fed_back
        d_o_hat = (g_o * scaled_tanh_prime_from_activation(cur.o))[None]
        dk, d_f1 = conv_maps_backward(cur.f[0], params["k_fo"], d_o_hat, need_kernel=wrt_params)
        _accumulate(grads, "k_fo", dk)
        _accumulate(grads, "b_o", np.array([d_o_hat.sum()]))
        g_f[0] = g_f[0] + d_f1

        new_g_f = [np.zeros_like(a) for a in g_f]
        new_g_c = [np.zeros_like(a) for a in g_c]

        for level in range(1, top + 1):
            i = level - 1
            spec = specs[i]
            decay = 1.0 - 1.0 / spec.tau

            # feature maps
            d_f_hat = carry_f[i] + g_f[i] * scaled_tanh_prime_from_activation(cur.f[i])
            d_drive = d_f_hat / spec.tau
            carry_f[i] = decay * d_f_hat
            _accumulate(grads, f"b_fm/{level}", d_drive.sum(axis=(1, 2)))

            dk, d_src = conv_maps_backward(prev.c[i], params[f"k_cf/{level}"], d_drive, need_kernel=wrt_params)
            _accumulate(grads, f"k_cf/{level}", dk)
            new_g_c[i] += d_src
            if level < top:
                dk, d_src = conv_maps_backward(prev.f[i + 1], params[f"k_ff/{level}"], d_drive,
                                               need_kernel=wrt_params)
                _accumulate(grads, f"k_ff/{level}", dk)
                new_g_f[i + 1] += d_src
            if level == 1:
                dk, d_src = conv_maps_backward(frame_maps, params["k_if"], d_drive,
                                               need_kernel=wrt_params, need_input=frame_grad_needed)
                _accumulate(grads, "k_if", dk)
                if d_src is not None:
                    g_frame += d_src[0]

            # context maps
            d_c_hat = carry_c[i] + g_c[i] * scaled_tanh_prime_from_activation(cur.c[i])
            d_cdrive = d_c_hat / spec.tau
            carry_c[i] = decay * d_c_hat
            _accumulate(grads, f"b_cm/{level}", d_cdrive.sum(axis=(1, 2)))

            w_cc = params[f"W_cc/{level}"]
            if wrt_params:
                grads.tensors[f"W_cc/{level}"] += np.einsum("mhw,nhw->mnhw", d_cdrive, prev.c[i])
            new_g_c[i] += np.einsum("mnhw,mhw->nhw", w_cc, d_cdrive)

            if level < top:
                upper = specs[i + 1]
                d_up = replicate_backward(d_cdrive, *upper.fm_size)
                if wrt_params:
                    grads.tensors[f"W_fc/{level}"] += np.einsum("mhw,qhw->mqhw", d_up, prev.f[i + 1])
                new_g_f[i + 1] += np.einsum("mqhw,mhw->qhw", params[f"W_fc/{level}"], d_up)

            if level == 1:
                dk, d_src = conv_maps_backward(frame_maps, params["k_fc/1"], d_cdrive,
                                               need_kernel=wrt_params, need_input=frame_grad_needed)
                _accumulate(grads, "k_fc/1", dk)
                if d_src is not None:
                    g_frame += d_src[0]
            else:
                dk, d_src = conv_maps_backward(prev.f[i - 1], params[f"k_fc/{level}"], d_cdrive,
                                               need_kernel=wrt_params)
                _accumulate(grads, f"k_fc/{level}", dk)
                new_g_f[i - 1] += d_src

        g_f, g_c = new_g_f, new_g_c
        g_fed_back = g_frame if frame_grad_needed else None

    start = trace[0]
    intention_grad = IntentionState(
        f_hat=[carry_f[i] + g_f[i] * scaled_tanh_prime_from_activation(start.f[i]) for i in range(top)],
        c_hat=[carry_c[i] + g_c[i] * scaled_tanh_prime_from_activation(start.c[i]) for i in range(top)],
    )
    if not intention_grad.is_finite() or (grads is not None and not all(
            np.isfinite(g).all() for _, g in grads.items())):
        raise NumericalFailureError("Non-finite gradient during backward pass", step=0)

    return BPTTResult(loss=loss, outputs=outputs, intention_grad=intention_grad, param_grads=grads)
