"""
Tests for map-grid arithmetic: convolution to arbitrary shapes, its
gradients, replication and the scaled tanh.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from network.grid_math import (
    TANH_SCALE,
    as_grid,
    conv_maps,
    conv_maps_backward,
    convolve,
    elementwise_mul,
    padding_for,
    replicate,
    replicate_backward,
    scaled_tanh,
    scaled_tanh_prime,
    scaled_tanh_prime_from_activation,
)
from utils.errors import ShapeError

sizes = st.integers(min_value=1, max_value=7)
kernel_sizes = st.integers(min_value=1, max_value=5)
seeds = st.integers(min_value=0, max_value=2 ** 16)


def test_as_grid_reshapes_flat_values():
    grid = as_grid([1, 2, 3, 4, 5, 6], height=2, width=3)
    assert grid.shape == (2, 3)
    assert grid[1, 0] == 4.0


def test_as_grid_rejects_wrong_count():
    with pytest.raises(ShapeError):
        as_grid([1, 2, 3], height=2, width=2)


def test_padding_for_same_size():
    assert padding_for(5, 3, 5) == (1, 1)
    assert padding_for(5, 1, 5) == (0, 0)
    # negative padding crops
    assert padding_for(9, 1, 5) == (-2, -2)


def test_unit_kernel_is_identity():
    x = np.arange(20, dtype=float).reshape(4, 5)
    assert np.array_equal(convolve(x, [[1.0]], 4, 5), x)


def test_centered_delta_kernel_is_identity():
    x = np.random.default_rng(0).normal(size=(5, 5))
    delta = np.zeros((3, 3))
    delta[1, 1] = 1.0
    assert np.allclose(convolve(x, delta, 5, 5), x)


def test_convolve_hand_computed():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    k = np.array([[1.0, 0.0], [0.0, -1.0]])
    # a single valid placement: 1*1 + 4*(-1)
    assert convolve(x, k, 1, 1)[0, 0] == pytest.approx(-3.0)


@given(in_h=sizes, in_w=sizes, kh=kernel_sizes, kw=kernel_sizes, out_h=sizes, out_w=sizes)
@settings(max_examples=40, deadline=None)
def test_convolve_produces_requested_shape(in_h, in_w, kh, kw, out_h, out_w):
    rng = np.random.default_rng(in_h * 31 + kw)
    out = convolve(rng.normal(size=(in_h, in_w)), rng.normal(size=(kh, kw)), out_h, out_w)
    assert out.shape == (out_h, out_w)


def nested_loop_convolve(x, k, out_h, out_w):
    """Cross-correlation one tap at a time; odd leftover padding goes to the bottom/right."""
    in_h, in_w = x.shape
    kh, kw = k.shape
    top = (out_h + kh - 1 - in_h) // 2
    left = (out_w + kw - 1 - in_w) // 2
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            for a in range(kh):
                for b in range(kw):
                    r, c = i + a - top, j + b - left
                    if 0 <= r < in_h and 0 <= c < in_w:
                        out[i, j] += k[a, b] * x[r, c]
    return out


@given(seed=seeds, in_h=st.integers(1, 8), in_w=st.integers(1, 8), kh=kernel_sizes, kw=kernel_sizes,
       out_h=st.integers(1, 10), out_w=st.integers(1, 10))
@settings(max_examples=80, deadline=None)
def test_convolve_matches_nested_loops(seed, in_h, in_w, kh, kw, out_h, out_w):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(in_h, in_w))
    k = rng.normal(size=(kh, kw))
    expected = nested_loop_convolve(x, k, out_h, out_w)
    assert np.allclose(convolve(x, k, out_h, out_w), expected, rtol=1e-12, atol=1e-12)


def test_convolve_even_padding_goes_bottom_right():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    # 2x2 kernel to 2x2 output needs one row and one column of padding, placed after the data
    out = convolve(x, np.array([[1.0, 0.0], [0.0, 0.0]]), 2, 2)
    assert np.array_equal(out, x)


def test_convolve_rejects_empty_target():
    with pytest.raises(ShapeError):
        convolve(np.ones((3, 3)), np.ones((1, 1)), 0, 3)


@given(seed=seeds, h=sizes, w=sizes, k=kernel_sizes)
@settings(max_examples=30, deadline=None)
def test_convolve_is_linear_in_input(seed, h, w, k):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, h, w))
    kernel = rng.normal(size=(k, k))
    lhs = convolve(a + 2.0 * b, kernel, h, w)
    rhs = convolve(a, kernel, h, w) + 2.0 * convolve(b, kernel, h, w)
    assert np.allclose(lhs, rhs)


@given(seed=seeds, h=sizes, w=sizes, kh=kernel_sizes, kw=kernel_sizes, out_h=sizes, out_w=sizes)
@settings(max_examples=40, deadline=None)
def test_conv_backward_is_adjoint(seed, h, w, kh, kw, out_h, out_w):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(2, h, w))
    kernels = rng.normal(size=(3, 2, kh, kw))
    grad_out = rng.normal(size=(3, out_h, out_w))
    value = float(np.sum(grad_out * conv_maps(src, kernels, out_h, out_w)))
    grad_k, grad_src = conv_maps_backward(src, kernels, grad_out)
    # the output is bilinear in (src, kernels)
    assert float(np.sum(grad_k * kernels)) == pytest.approx(value, rel=1e-9, abs=1e-9)
    assert float(np.sum(grad_src * src)) == pytest.approx(value, rel=1e-9, abs=1e-9)


def test_conv_maps_sums_sources():
    rng = np.random.default_rng(3)
    src = rng.normal(size=(2, 4, 4))
    kernels = rng.normal(size=(1, 2, 3, 3))
    combined = conv_maps(src, kernels, 4, 4)[0]
    separate = convolve(src[0], kernels[0, 0], 4, 4) + convolve(src[1], kernels[0, 1], 4, 4)
    assert np.allclose(combined, separate)


def test_conv_maps_source_count_mismatch():
    with pytest.raises(ShapeError):
        conv_maps(np.ones((3, 4, 4)), np.ones((1, 2, 3, 3)), 4, 4)


def test_elementwise_mul_commutes_and_checks_shape():
    a = np.arange(6.0).reshape(2, 3)
    b = np.linspace(-1, 1, 6).reshape(2, 3)
    assert np.array_equal(elementwise_mul(a, b), elementwise_mul(b, a))
    with pytest.raises(ShapeError):
        elementwise_mul(a, np.ones((3, 2)))


def test_replicate_blocks():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = replicate(x, 4, 4)
    assert out.shape == (1, 4, 4)
    assert np.all(out[0, :2, :2] == 1.0)
    assert np.all(out[0, 2:, 2:] == 4.0)


def test_replicate_rejects_non_multiple():
    with pytest.raises(ShapeError):
        replicate(np.ones((1, 2, 2)), 3, 4)


@given(seed=seeds, fy=st.integers(1, 3), fx=st.integers(1, 3))
@settings(max_examples=20, deadline=None)
def test_replicate_backward_is_adjoint(seed, fy, fx):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 2, 3))
    g = rng.normal(size=(2, 2 * fy, 3 * fx))
    lhs = float(np.sum(replicate(x, 2 * fy, 3 * fx) * g))
    rhs = float(np.sum(x * replicate_backward(g, 2, 3)))
    assert lhs == pytest.approx(rhs)


@given(x=st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_scaled_tanh_is_bounded(x):
    assert abs(scaled_tanh(x)) <= TANH_SCALE


def test_scaled_tanh_fixed_points():
    # LeCun's choice maps +-1 to roughly +-1
    assert scaled_tanh(0.0) == 0.0
    assert scaled_tanh(1.0) == pytest.approx(1.0, abs=2e-3)


@given(x=st.floats(min_value=-4, max_value=4, allow_nan=False))
def test_scaled_tanh_derivatives_agree(x):
    h = 1e-6
    numeric = (scaled_tanh(x + h) - scaled_tanh(x - h)) / (2 * h)
    assert scaled_tanh_prime(x) == pytest.approx(numeric, rel=1e-5, abs=1e-8)
    assert scaled_tanh_prime_from_activation(scaled_tanh(x)) == pytest.approx(scaled_tanh_prime(x), abs=1e-12)


def main():
    """Run all tests."""
    print("=" * 80)
    print("Grid Math Tests")
    print("=" * 80)
    sys.exit(pytest.main([__file__, "-q"]))


if __name__ == "__main__":
    main()
