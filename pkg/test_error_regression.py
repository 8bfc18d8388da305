"""
Tests for online recognition: window regression, stream tracking and the
entrainment baseline.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from network.architecture import ArchitectureSpec, LayerSpec
from network.dynamics import CLOSED, OPEN, IntentionState, rollout
from network.params import NetworkParams, param_layout
from recognition.error_regression import (
    RegressionConfig,
    entrainment_stream,
    recognize_stream,
    recognize_streams,
    regress_window,
)
from training.gradcheck import numerical_gradients
from utils.errors import ConfigError, DataError


def small_arch() -> ArchitectureSpec:
    return ArchitectureSpec(
        layers=[
            LayerSpec(level=1, tau=2.0, num_fm=2, num_cm=1, fm_size=(3, 3), cm_size=(2, 2)),
            LayerSpec(level=2, tau=4.0, num_fm=1, num_cm=1, fm_size=(2, 2), cm_size=(2, 2)),
        ],
        input_size=(4, 4),
        base_kernel=2,
    )


def scalar_arch() -> ArchitectureSpec:
    return ArchitectureSpec(
        layers=[
            LayerSpec(level=1, tau=2.0, num_fm=1, num_cm=1, fm_size=(1, 1), cm_size=(1, 1)),
            LayerSpec(level=2, tau=4.0, num_fm=1, num_cm=1, fm_size=(1, 1), cm_size=(1, 1)),
        ],
        input_size=(1, 1),
        base_kernel=1,
    )


def random_params(arch: ArchitectureSpec, seed: int, scale: float = 0.6) -> NetworkParams:
    rng = np.random.default_rng(seed)
    return NetworkParams({name: rng.uniform(-scale, scale, size=shape) for name, shape, _ in param_layout(arch)})


def random_intention(arch: ArchitectureSpec, seed: int) -> IntentionState:
    rng = np.random.default_rng(seed)
    zero = IntentionState.zeros(arch)
    return IntentionState([rng.uniform(-1, 1, size=a.shape) for a in zero.f_hat],
                          [rng.uniform(-1, 1, size=a.shape) for a in zero.c_hat])


def stream_of(arch: ArchitectureSpec, steps: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.8, 0.8, size=(steps,) + tuple(arch.input_size))


def test_config_validation():
    with pytest.raises(ConfigError):
        RegressionConfig(window=0)
    with pytest.raises(ConfigError):
        RegressionConfig(iters_per_step=0)
    with pytest.raises(ConfigError):
        RegressionConfig(rate=-0.1)


def test_config_mode():
    assert RegressionConfig().mode == CLOSED
    assert RegressionConfig(open_loop_window=True).mode == OPEN


def test_zero_rate_returns_guess():
    arch = small_arch()
    params = random_params(arch, 0)
    guess = random_intention(arch, 1)
    result = regress_window(params, arch, stream_of(arch, 6, 2), guess, RegressionConfig(rate=0.0))
    for a, b in zip(result.intention.arrays(), guess.arrays()):
        assert np.array_equal(a, b)


def test_single_frame_history_returns_guess():
    arch = small_arch()
    guess = random_intention(arch, 3)
    result = regress_window(random_params(arch, 0), arch, stream_of(arch, 1, 0), guess, RegressionConfig())
    assert result.intention.max_abs_diff(guess) == 0.0
    assert result.reconstruction_mse == 0.0


def test_empty_history_rejected():
    arch = small_arch()
    with pytest.raises(DataError):
        regress_window(random_params(arch, 0), arch, np.zeros((0, 4, 4)), IntentionState.zeros(arch),
                       RegressionConfig())


def test_self_generated_history_is_a_fixed_point():
    arch = small_arch()
    params = random_params(arch, 5)
    intention = random_intention(arch, 6)
    first = stream_of(arch, 1, 7)
    outputs, _ = rollout(params, arch, intention, CLOSED, first, 7)
    history = np.concatenate([first, outputs])
    result = regress_window(params, arch, history, intention, RegressionConfig(iters_per_step=10))
    assert result.reconstruction_mse == pytest.approx(0.0, abs=1e-20)
    assert result.intention.max_abs_diff(intention) == 0.0


@given(seed=st.integers(0, 10_000), open_loop=st.booleans())
@settings(max_examples=15, deadline=None)
def test_window_error_never_increases(seed, open_loop):
    arch = small_arch()
    params = random_params(arch, seed)
    guess = random_intention(arch, seed + 1)
    cfg = RegressionConfig(rate=0.5, iters_per_step=5, open_loop_window=open_loop)
    result = regress_window(params, arch, stream_of(arch, 6, seed + 2), guess, cfg)
    assert result.reconstruction_mse <= result.initial_mse
    assert result.error_curve[0] == result.initial_mse


def test_regress_window_is_pure():
    arch = small_arch()
    params = random_params(arch, 8)
    guess = random_intention(arch, 9)
    history = stream_of(arch, 5, 10)
    cfg = RegressionConfig(iters_per_step=4)
    a = regress_window(params, arch, history, guess, cfg)
    b = regress_window(params, arch, history, guess, cfg)
    assert a.intention.max_abs_diff(b.intention) == 0.0
    assert a.error_curve == b.error_curve
    # the guess itself is never modified
    assert guess.max_abs_diff(random_intention(arch, 9)) == 0.0


def test_one_iteration_is_a_gradient_step():
    arch = scalar_arch()
    params = random_params(arch, 11, scale=0.9)
    guess = random_intention(arch, 12)
    history = stream_of(arch, 3, 13)
    rate = 1e-3
    _, numeric = numerical_gradients(params, arch, guess.copy(), history, CLOSED)
    result = regress_window(params, arch, history, guess, RegressionConfig(rate=rate, iters_per_step=1,
                                                                          early_stop_mse=0.0))
    assert result.reconstruction_mse < result.initial_mse
    expected = guess.add_scaled(numeric, -rate)
    assert result.intention.max_abs_diff(expected) < 1e-9


def test_recognition_leaves_parameters_untouched():
    arch = small_arch()
    params = random_params(arch, 14)
    before = params.checksum()
    recognize_stream(params, arch, stream_of(arch, 8, 15), RegressionConfig(window=3, iters_per_step=3))
    entrainment_stream(params, arch, stream_of(arch, 8, 15))
    assert params.checksum() == before


def test_recognition_trace_lengths():
    arch = small_arch()
    stream = stream_of(arch, 9, 16)
    trace = recognize_stream(random_params(arch, 17), arch, stream, RegressionConfig(window=4, iters_per_step=2),
                             record_states=True)
    assert trace.predictions.shape == (8, 4, 4)
    assert len(trace.step_mse) == 8
    assert len(trace.window_mse) == 8
    assert len(trace.intentions) == 8
    assert len(trace.error_curves) == 8
    assert len(trace.states) == 8
    for t in range(8):
        assert trace.step_mse[t] == pytest.approx(float(np.mean((trace.predictions[t] - stream[t + 1]) ** 2)))


def test_full_width_window_covers_history():
    arch = small_arch()
    params = random_params(arch, 18)
    stream = stream_of(arch, 6, 19)
    cfg = RegressionConfig(window=len(stream), iters_per_step=3)
    trace = recognize_stream(params, arch, stream, cfg)
    # the last step regresses over every frame but the final target
    outputs, _ = rollout(params, arch, trace.intentions[-1], CLOSED, stream[:-1], len(stream) - 1)
    assert np.allclose(trace.predictions[-1], outputs[-1])


def test_unit_window_predicts_from_current_frame():
    arch = small_arch()
    params = random_params(arch, 20)
    stream = stream_of(arch, 5, 21)
    trace = recognize_stream(params, arch, stream, RegressionConfig(window=1))
    assert np.all(np.isfinite(trace.predictions))
    outputs, _ = rollout(params, arch, trace.intentions[-1], CLOSED, stream[-2:-1], 1)
    assert np.allclose(trace.predictions[-1], outputs[0])


def test_recognition_needs_two_frames():
    arch = small_arch()
    with pytest.raises(DataError):
        recognize_stream(random_params(arch, 0), arch, stream_of(arch, 1, 0), RegressionConfig())
    with pytest.raises(DataError):
        entrainment_stream(random_params(arch, 0), arch, stream_of(arch, 1, 0))


def test_entrainment_is_one_open_loop_pass():
    arch = small_arch()
    params = random_params(arch, 22)
    stream = stream_of(arch, 7, 23)
    intention = random_intention(arch, 24)
    trace = entrainment_stream(params, arch, stream, intention, record_states=True)
    outputs, _ = rollout(params, arch, intention, OPEN, stream, 6)
    assert np.array_equal(trace.predictions, outputs)
    assert len(trace.states) == 6
    assert trace.mean_mse == pytest.approx(float(np.mean((outputs - stream[1:]) ** 2)))


def test_entrainment_on_blank_stream_is_finite():
    arch = small_arch()
    trace = entrainment_stream(random_params(arch, 25), arch, np.zeros((6, 4, 4)))
    assert np.isfinite(trace.mean_mse)


def test_parallel_streams_match_sequential():
    arch = small_arch()
    params = random_params(arch, 29)
    streams = [stream_of(arch, 6, s) for s in (30, 31, 32)]
    cfg = RegressionConfig(window=3, iters_per_step=2)
    sequential = recognize_streams(params, arch, streams, cfg, threads=1)
    parallel = recognize_streams(params, arch, streams, cfg, threads=3)
    for a, b in zip(sequential, parallel):
        assert np.array_equal(a.predictions, b.predictions)


def main():
    """Run all tests."""
    print("=" * 80)
    print("Error Regression Tests")
    print("=" * 80)
    sys.exit(pytest.main([__file__, "-q"]))


if __name__ == "__main__":
    main()
