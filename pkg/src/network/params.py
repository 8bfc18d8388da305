"""
Network parameter container and initializer.

All tensors live in one ordered name -> array mapping. The order is fixed by
the architecture and is the order used for checksums, SGD updates and the
checkpoint payload.

Tensor names (l = level, 1-based):
    k_ff/l  (Q_l, Q_{l+1}, kh, kw)   top-down FM kernels (absent for the top layer)
    k_cf/l  (Q_l, N_l, kh, kw)       CM -> FM kernels
    k_if    (Q_1, 1, kh, kw)         input -> layer-1 FM kernels
    W_cc/l  (N_l, N_l, *cm_size)     CM recurrent element-wise weights
    W_fc/l  (N_l, Q_{l+1}, *fm_size_{l+1})  upper FM -> CM element-wise weights
    k_fc/l  (N_l, R, kh, kw)         lower FM (input frame for l = 1) -> CM kernels
    k_fo    (1, Q_1, kh, kw)         layer-1 FM -> output kernels
    b_fm/l  (Q_l,)   b_cm/l  (N_l,)   b_o  (1,)
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np

from network.architecture import ArchitectureSpec
from utils.errors import ShapeError

TensorSpec = Tuple[str, Tuple[int, ...], int]


def param_layout(arch: ArchitectureSpec) -> List[TensorSpec]:
    """
    Ordered (name, shape, fan_in) for every parameter tensor of an architecture.

    Args:
        arch: Network architecture

    Returns:
        List of (name, shape, fan_in) tuples
    """
    layout: List[TensorSpec] = []
    top = arch.num_layers
    for level in range(1, top + 1):
        spec = arch.layer(level)
        q, n = spec.num_fm, spec.num_cm
        if level < top:
            upper = arch.layer(level + 1)
            kh, kw = arch.kernel_size(level, "ff")
            layout.append((f"k_ff/{level}", (q, upper.num_fm, kh, kw), upper.num_fm * kh * kw))
        kh, kw = arch.kernel_size(level, "cf")
        layout.append((f"k_cf/{level}", (q, n, kh, kw), n * kh * kw))
        if level == 1:
            kh, kw = arch.kernel_size(1, "if")
            layout.append(("k_if", (q, 1, kh, kw), kh * kw))
        layout.append((f"W_cc/{level}", (n, n) + spec.cm_size, n))
        if level < top:
            upper = arch.layer(level + 1)
            layout.append((f"W_fc/{level}", (n, upper.num_fm) + upper.fm_size, upper.num_fm))
        lower_maps = 1 if level == 1 else arch.layer(level - 1).num_fm
        kh, kw = arch.kernel_size(level, "fc")
        layout.append((f"k_fc/{level}", (n, lower_maps, kh, kw), lower_maps * kh * kw))
    kh, kw = arch.kernel_size(1, "fo")
    layout.append(("k_fo", (1, arch.layer(1).num_fm, kh, kw), arch.layer(1).num_fm * kh * kw))
    for level in range(1, top + 1):
        spec = arch.layer(level)
        layout.append((f"b_fm/{level}", (spec.num_fm,), 0))
        layout.append((f"b_cm/{level}", (spec.num_cm,), 0))
    layout.append(("b_o", (1,), 0))
    return layout


@dataclass
class NetworkParams:
    """Named parameter tensors in architecture order."""

    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    def names(self) -> List[str]:
        return list(self.tensors)

    def copy(self) -> "NetworkParams":
        return NetworkParams({name: value.copy() for name, value in self.tensors.items()})

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams({name: np.zeros_like(value) for name, value in self.tensors.items()})

    def num_values(self) -> int:
        return int(sum(value.size for value in self.tensors.values()))

    def checksum(self) -> str:
        """SHA-256 over names, shapes and little-endian float64 bytes."""
        digest = hashlib.sha256()
        for name, value in self.tensors.items():
            digest.update(name.encode("utf-8"))
            digest.update(str(value.shape).encode("utf-8"))
            digest.update(np.ascontiguousarray(value, dtype="<f8").tobytes())
        return digest.hexdigest()

    def check_against(self, arch: ArchitectureSpec):
        """Raise ShapeError unless every layout tensor is present with the right shape."""
        expected = param_layout(arch)
        if [name for name, _, _ in expected] != list(self.tensors):
            raise ShapeError("Parameter names do not match the architecture layout")
        for name, shape, _ in expected:
            if self.tensors[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")


def init_params(arch: ArchitectureSpec, seed: int) -> NetworkParams:
    """
    Uniform fan-in initialization; biases start at zero.

    Args:
        arch: Network architecture
        seed: RNG seed (identical seeds give bit-identical parameters)

    Returns:
        NetworkParams
    """
    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = {}
    for name, shape, fan_in in param_layout(arch):
        if name.startswith("b_"):
            tensors[name] = np.zeros(shape)
            continue
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(tensors)
