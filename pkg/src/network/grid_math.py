"""
Dense 2D map-grid arithmetic.

Maps are float64 numpy arrays. Single maps are (H, W); stacks of maps are
(n, H, W). Convolution is stride-1 cross-correlation against a zero-padded
(or cropped) input so that the result has an arbitrary requested shape.
The same primitive therefore serves down-paths (output smaller than input)
and up-paths (output larger than input).
"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.errors import ShapeError

# LeCun's scaled hyperbolic tangent
TANH_SCALE = 1.7159
TANH_SLOPE = 2.0 / 3.0

MapGrid = np.ndarray
Kernel = np.ndarray


def as_grid(values, height: int = None, width: int = None) -> MapGrid:
    """
    Build a validated MapGrid.

    Args:
        values: Nested rows or a flat row-major sequence
        height: Row count (required when values is flat)
        width: Column count (required when values is flat)

    Returns:
        (height, width) float64 array
    """
    grid = np.asarray(values, dtype=np.float64)
    if height is not None and width is not None:
        if grid.size != height * width:
            raise ShapeError(f"Expected {height}x{width}={height * width} values, got {grid.size}")
        grid = grid.reshape(height, width)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ShapeError(f"MapGrid must be a non-empty 2D grid, got shape {grid.shape}")
    return grid


def padding_for(in_size: int, k: int, out_size: int) -> Tuple[int, int]:
    """Leading/trailing padding along one axis (negative values crop)."""
    total = out_size + k - 1 - in_size
    before = total // 2
    return before, total - before


def _place(x: np.ndarray, pad_h: Tuple[int, int], pad_w: Tuple[int, int]) -> np.ndarray:
    """Zero-pad or crop the last two axes of x."""
    h, w = x.shape[-2:]
    top, bottom = pad_h
    left, right = pad_w
    out = np.zeros(x.shape[:-2] + (h + top + bottom, w + left + right))
    src_r0, dst_r0 = max(0, -top), max(0, top)
    src_c0, dst_c0 = max(0, -left), max(0, left)
    rows = min(h - src_r0, out.shape[-2] - dst_r0)
    cols = min(w - src_c0, out.shape[-1] - dst_c0)
    if rows > 0 and cols > 0:
        out[..., dst_r0:dst_r0 + rows, dst_c0:dst_c0 + cols] = \
            x[..., src_r0:src_r0 + rows, src_c0:src_c0 + cols]
    return out


def _unplace(g: np.ndarray, in_shape: Tuple[int, int],
             pad_h: Tuple[int, int], pad_w: Tuple[int, int]) -> np.ndarray:
    """Adjoint of _place: route gradient of the padded array back to x."""
    h, w = in_shape
    top, left = pad_h[0], pad_w[0]
    out = np.zeros(g.shape[:-2] + (h, w))
    src_r0, dst_r0 = max(0, top), max(0, -top)
    src_c0, dst_c0 = max(0, left), max(0, -left)
    rows = min(h - dst_r0, g.shape[-2] - src_r0)
    cols = min(w - dst_c0, g.shape[-1] - src_c0)
    if rows > 0 and cols > 0:
        out[..., dst_r0:dst_r0 + rows, dst_c0:dst_c0 + cols] = \
            g[..., src_r0:src_r0 + rows, src_c0:src_c0 + cols]
    return out


def _check_target(out_h: int, out_w: int):
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"Target shape must be positive, got {out_h}x{out_w}")


def conv_maps(src: np.ndarray, kernels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """
    Multi-map convolution: out[d] = sum_s convolve(src[s], kernels[d, s]).

    Args:
        src: (n_src, H, W) source maps
        kernels: (n_dst, n_src, kh, kw)
        out_h: Target height
        out_w: Target width

    Returns:
        (n_dst, out_h, out_w) array
    """
    _check_target(out_h, out_w)
    n_dst, n_src, kh, kw = kernels.shape
    if src.shape[0] != n_src:
        raise ShapeError(f"Kernel expects {n_src} source maps, got {src.shape[0]}")
    if n_dst == 0 or n_src == 0:
        return np.zeros((n_dst, out_h, out_w))
    pad_h = padding_for(src.shape[1], kh, out_h)
    pad_w = padding_for(src.shape[2], kw, out_w)
    windows = sliding_window_view(_place(src, pad_h, pad_w), (kh, kw), axis=(1, 2))
    return np.tensordot(kernels, windows, axes=([1, 2, 3], [0, 3, 4]))


def conv_maps_backward(src: np.ndarray, kernels: np.ndarray, grad_out: np.ndarray,
                       need_kernel: bool = True, need_input: bool = True
                       ) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Gradients of conv_maps with respect to its kernels and its source maps.

    Args:
        src: (n_src, H, W) forward source maps
        kernels: (n_dst, n_src, kh, kw) forward kernels
        grad_out: (n_dst, out_h, out_w) gradient of the loss w.r.t. the output
        need_kernel: Compute the kernel gradient (None otherwise)
        need_input: Compute the source-map gradient (None otherwise)

    Returns:
        Tuple of (grad_kernels, grad_src)
    """
    n_dst, n_src, kh, kw = kernels.shape
    out_h, out_w = grad_out.shape[1:]
    if n_dst == 0 or n_src == 0:
        return (np.zeros_like(kernels) if need_kernel else None,
                np.zeros_like(src) if need_input else None)
    pad_h = padding_for(src.shape[1], kh, out_h)
    pad_w = padding_for(src.shape[2], kw, out_w)

    grad_k = None
    if need_kernel:
        windows = sliding_window_view(_place(src, pad_h, pad_w), (kh, kw), axis=(1, 2))
        grad_k = np.tensordot(grad_out, windows, axes=([1, 2], [1, 2]))

    grad_src = None
    if need_input:
        # full correlation with the flipped kernel gives the padded-input gradient
        g_full = np.pad(grad_out, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        g_windows = sliding_window_view(g_full, (kh, kw), axis=(1, 2))
        flipped = kernels[:, :, ::-1, ::-1]
        grad_padded = np.tensordot(flipped, g_windows, axes=([0, 2, 3], [0, 3, 4]))
        grad_src = _unplace(grad_padded, src.shape[1:], pad_h, pad_w)
    return grad_k, grad_src


def convolve(grid: MapGrid, kernel: Kernel, out_h: int, out_w: int) -> MapGrid:
    """
    Zero-padded stride-1 cross-correlation of one map to a target shape.

    Args:
        grid: (H, W) input map
        kernel: (kh, kw) taps
        out_h: Output rows (>= 1)
        out_w: Output columns (>= 1)

    Returns:
        (out_h, out_w) map
    """
    grid = as_grid(grid)
    kernel = as_grid(kernel)
    return conv_maps(grid[None], kernel[None, None], out_h, out_w)[0]


def elementwise_mul(a: MapGrid, b: MapGrid) -> MapGrid:
    """Cellwise product of two equally shaped maps."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Incompatible maps for element-wise product: {a.shape} vs {b.shape}")
    return a * b


def scaled_tanh(x):
    return TANH_SCALE * np.tanh(TANH_SLOPE * x)


def scaled_tanh_prime(x):
    t = np.tanh(TANH_SLOPE * x)
    return TANH_SCALE * TANH_SLOPE * (1.0 - t * t)


def scaled_tanh_prime_from_activation(a):
    """Derivative of scaled_tanh expressed through its output a = scaled_tanh(x)."""
    r = a / TANH_SCALE
    return TANH_SCALE * TANH_SLOPE * (1.0 - r * r)


def replicate(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour replication of (n, h, w) maps onto an integer-multiple grid."""
    h, w = x.shape[-2:]
    if out_h % h or out_w % w:
        raise ShapeError(f"Cannot replicate {h}x{w} onto {out_h}x{out_w}: not an integer multiple")
    fy, fx = out_h // h, out_w // w
    if fy == 1 and fx == 1:
        return x
    return np.repeat(np.repeat(x, fy, axis=-2), fx, axis=-1)


def replicate_backward(g: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of replicate: sum-pool blocks back onto the source grid."""
    out_h, out_w = g.shape[-2:]
    fy, fx = out_h // in_h, out_w // in_w
    if fy == 1 and fx == 1:
        return g
    return g.reshape(g.shape[:-2] + (in_h, fy, in_w, fx)).sum(axis=(-3, -1))
