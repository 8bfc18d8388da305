"""
Tests for the loss, BPTT gradients, the finite-difference oracle and the
training loops.
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
from network.dynamics import CLOSED, OPEN, IntentionState
from network.params import init_params
from training.bptt import bptt, mse
from training.gradcheck import compare_gradients, random_case, relative_error, run_gradcheck
from training.trainer import (
    TrainingConfig,
    closed_loop_errors,
    continue_training,
    open_loop_errors,
    train,
)
from utils.errors import ConfigError, DataError
from utils.run_config import load_run_config

CONFIG_DIR = Path(__file__).parent / "config"


def micro_arch() -> ArchitectureSpec:
    return load_run_config(str(CONFIG_DIR / "micro.yaml")).architecture


def tiny_arch() -> ArchitectureSpec:
    return ArchitectureSpec(
        layers=[
            LayerSpec(level=1, tau=2.0, num_fm=2, num_cm=1, fm_size=(3, 3), cm_size=(2, 2)),
            LayerSpec(level=2, tau=4.0, num_fm=1, num_cm=1, fm_size=(2, 2), cm_size=(2, 2)),
        ],
        input_size=(4, 4),
        base_kernel=2,
    )


def toy_dataset(count: int = 2, steps: int = 8):
    """Smooth periodic 4x4 sequences in [-1, 1]."""
    t = np.arange(steps)[:, None, None]
    yy, xx = np.mgrid[0:4, 0:4]
    return [0.8 * np.sin(2 * np.pi * t / 4 + 0.5 * k + 0.3 * xx - 0.2 * yy) for k in range(count)]


def quiet(**overrides) -> TrainingConfig:
    base = dict(learning_rate=0.01, max_epochs=5, eval_every=2, verbose=False)
    base.update(overrides)
    return TrainingConfig(**base)


# ---------------------------------------------------------------- loss

def test_mse_identical_is_zero():
    seq = np.random.default_rng(0).normal(size=(3, 2, 2))
    assert mse(seq, seq) == 0.0


def test_mse_zeros_against_ones():
    assert mse(np.zeros((2, 3, 3)), np.ones((2, 3, 3))) == pytest.approx(1.0)


def test_mse_hand_sum():
    pred = np.array([[[0.0, 1.0], [2.0, 3.0]], [[1.0, 1.0], [1.0, 1.0]]])
    target = np.array([[[1.0, 1.0], [1.0, 1.0]], [[0.0, 0.0], [0.0, 3.0]]])
    # squared differences: 1 0 1 4 | 1 1 1 4 -> 13 / 8
    assert mse(pred, target) == pytest.approx(13.0 / 8.0)


def test_mse_shape_mismatch():
    with pytest.raises(DataError):
        mse(np.zeros((2, 2, 2)), np.zeros((3, 2, 2)))


# ---------------------------------------------------------------- gradients

def test_zero_network_zero_targets_gives_zero_gradients():
    arch = tiny_arch()
    params = init_params(arch, 0).zeros_like()
    result = bptt(params, arch, IntentionState.zeros(arch), np.zeros((5, 4, 4)), OPEN)
    assert result.loss == 0.0
    for _, grad in result.param_grads.items():
        assert np.all(grad == 0.0)
    for grad in result.intention_grad.arrays():
        assert np.all(grad == 0.0)


def test_bptt_loss_matches_rollout_mse():
    arch = tiny_arch()
    params, intention, sequence = random_case(arch, 6, np.random.default_rng(1))
    for mode in (OPEN, CLOSED):
        result = bptt(params, arch, intention, sequence, mode)
        assert result.loss == pytest.approx(mse(result.outputs, sequence[1:]))
        assert result.outputs.shape == (5, 4, 4)


def test_bptt_needs_two_frames():
    arch = tiny_arch()
    with pytest.raises(DataError):
        bptt(init_params(arch, 0), arch, IntentionState.zeros(arch), np.zeros((1, 4, 4)))


def test_decoupled_top_layer_has_zero_intention_gradient():
    arch = tiny_arch()
    params, intention, sequence = random_case(arch, 5, np.random.default_rng(2))
    # cut every top-down pathway out of layer 2
    params.tensors["k_ff/1"][...] = 0.0
    params.tensors["W_fc/1"][...] = 0.0
    result = bptt(params, arch, intention, sequence, CLOSED)
    assert np.all(result.intention_grad.f_hat[1] == 0.0)
    assert np.all(result.intention_grad.c_hat[1] == 0.0)
    assert np.any(result.intention_grad.f_hat[0] != 0.0)


def test_wrt_params_false_skips_parameter_gradients():
    arch = tiny_arch()
    params, intention, sequence = random_case(arch, 5, np.random.default_rng(3))
    full = bptt(params, arch, intention, sequence, CLOSED)
    light = bptt(params, arch, intention, sequence, CLOSED, wrt_params=False)
    assert light.param_grads is None
    for a, b in zip(full.intention_grad.arrays(), light.intention_grad.arrays()):
        assert np.allclose(a, b)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.2])) == pytest.approx(0.2 / 2.2)


@given(seed=st.integers(0, 10_000), mode=st.sampled_from([OPEN, CLOSED]))
@settings(max_examples=5, deadline=None)
def test_gradients_match_finite_differences(seed, mode):
    arch = micro_arch()
    params, intention, sequence = random_case(arch, 5, np.random.default_rng(seed))
    errors = compare_gradients(params, arch, intention, sequence, mode)
    assert max(errors.values()) <= 1e-4, {k: v for k, v in errors.items() if v > 1e-4}


def test_gradcheck_on_micro_network():
    report = run_gradcheck(micro_arch(), trials=20, steps=5, seed=0)
    assert report.passed, report.format_summary()
    # every parameter class and the intention state, in both modes
    assert any(name.startswith("open:") for name in report.max_errors)
    assert any(name.startswith("closed:intention/") for name in report.max_errors)


# ---------------------------------------------------------------- training

def test_training_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(closed_loop_stop=0.0)
    with pytest.raises(ConfigError):
        TrainingConfig(momentum=1.0)
    with pytest.raises(ConfigError):
        TrainingConfig(threads=0)


def test_train_rejects_empty_dataset():
    with pytest.raises(DataError, match="empty dataset"):
        train([], tiny_arch(), quiet())


def test_train_rejects_short_sequences():
    with pytest.raises(DataError):
        train([np.zeros((1, 4, 4))], tiny_arch(), quiet())


def test_zero_learning_rate_keeps_parameters():
    arch = tiny_arch()
    model = train(toy_dataset(), arch, quiet(learning_rate=0.0, max_epochs=4))
    assert model.params.checksum() == init_params(arch, 0).checksum()
    assert all(not np.any(a) for intention in model.intentions for a in intention.arrays())


def test_training_is_reproducible():
    arch = tiny_arch()
    a = train(toy_dataset(), arch, quiet(seed=3))
    b = train(toy_dataset(), arch, quiet(seed=3))
    assert a.params.checksum() == b.params.checksum()
    assert [(r.open_mse, r.closed_mse) for r in a.log] == [(r.open_mse, r.closed_mse) for r in b.log]


def test_threaded_training_matches_sequential():
    arch = tiny_arch()
    data = toy_dataset(count=3)
    single = train(data, arch, quiet(threads=1))
    threaded = train(data, arch, quiet(threads=3))
    assert single.params.checksum() == threaded.params.checksum()


def test_training_log_and_evaluation():
    model = train(toy_dataset(), tiny_arch(), quiet(max_epochs=5, eval_every=2), labels=["a", "b"])
    assert [r.epoch for r in model.log] == [1, 2, 3, 4, 5]
    # closed loop is measured every eval_every epochs and at the last epoch
    assert [r.closed_mse is not None for r in model.log] == [False, True, False, True, True]
    assert model.stage == 1
    assert model.labels == ["a", "b"]
    assert model.last_evaluation().epoch == 5


def test_training_reduces_open_loop_error():
    arch = tiny_arch()
    model = train(toy_dataset(), arch, quiet(learning_rate=0.01, max_epochs=60, eval_every=20))
    assert model.log[-1].open_mse < model.log[0].open_mse


def test_training_stops_at_closed_loop_threshold():
    model = train(toy_dataset(), tiny_arch(), quiet(closed_loop_stop=1e6, max_epochs=50, eval_every=1))
    assert len(model.log) == 1


def test_momentum_training_runs():
    model = train(toy_dataset(), tiny_arch(), quiet(momentum=0.9, max_epochs=3))
    assert np.isfinite(model.log[-1].open_mse)


def test_error_helpers_match_log():
    arch = tiny_arch()
    data = toy_dataset()
    model = train(data, arch, quiet(max_epochs=2, eval_every=1))
    closed = closed_loop_errors(model.params, arch, model.intentions, data)
    assert model.log[-1].closed_mse == pytest.approx(float(np.mean(closed)))
    opened = open_loop_errors(model.params, arch, model.intentions, data)
    assert len(opened) == 2 and all(np.isfinite(opened))


def test_intention_lookup():
    model = train(toy_dataset(), tiny_arch(), quiet(max_epochs=1), labels=["a", "b"])
    assert model.intention_for("b") is model.intentions[1]
    with pytest.raises(DataError):
        model.intention_for("missing")


def test_continue_training_with_nothing_returns_model():
    model = train(toy_dataset(), tiny_arch(), quiet(max_epochs=1))
    assert continue_training(model, [], quiet()) is model


def test_continue_training_extends_intentions():
    arch = tiny_arch()
    data = toy_dataset()
    model = train(data, arch, quiet(max_epochs=2), labels=["a", "b"])
    extra = toy_dataset(count=3, steps=10)[2:]
    extended = continue_training(model, extra, quiet(max_epochs=3), new_labels=["ab"], replay=data)
    assert extended.labels == ["a", "b", "ab"]
    assert len(extended.intentions) == 3
    assert extended.stage == 2
    assert extended.epochs_in_stage(1) == 2
    assert extended.epochs_in_stage(2) == 3
    # the input model is left untouched
    assert len(model.intentions) == 2
    assert model.params.checksum() != extended.params.checksum()


def test_continue_training_freeze_old_keeps_old_intentions():
    arch = tiny_arch()
    data = toy_dataset()
    model = train(data, arch, quiet(max_epochs=2))
    extended = continue_training(model, toy_dataset(count=3)[2:], quiet(max_epochs=2), freeze_old=True)
    for old, new in zip(model.intentions, extended.intentions[:2]):
        assert old.max_abs_diff(new) == 0.0
    assert extended.intentions[2].max_abs_diff(IntentionState.zeros(arch)) > 0.0


def test_continue_training_is_joint_by_default():
    data = toy_dataset()
    model = train(data, tiny_arch(), quiet(max_epochs=1))
    extra = toy_dataset(count=3)[2:]
    with pytest.raises(DataError, match="replay"):
        continue_training(model, extra, quiet())
    with pytest.raises(DataError):
        continue_training(model, extra, quiet(), replay=data, freeze_old=True)
    extended = continue_training(model, extra, quiet(max_epochs=2), replay=data)
    assert all(old.max_abs_diff(new) > 0.0 for old, new in zip(model.intentions, extended.intentions[:2]))


def test_continue_training_checks_replay_count():
    data = toy_dataset()
    model = train(data, tiny_arch(), quiet(max_epochs=1))
    with pytest.raises(DataError):
        continue_training(model, data[:1], quiet(), replay=data[:1])


def main():
    """Run all tests."""
    print("=" * 80)
    print("Training Tests")
    print("=" * 80)
    sys.exit(pytest.main([__file__, "-q"]))


if __name__ == "__main__":
    main()
