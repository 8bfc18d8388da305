"""
Versioned binary checkpoint of a trained model.

Layout (all integers little-endian uint32):

    b"PMST" | version | header length | header (UTF-8 JSON) | tensors | CRC-32

The header holds the architecture, sequence labels, training log, seed and a
manifest of every tensor (name and shape) in payload order. Tensors are
64-bit little-endian floats, row-major: network parameters first, then the
intention of every labelled sequence (FM states of every layer, then CM
states). The CRC covers header and tensors.
"""

import json
import os
import struct
import zlib
from typing import Dict, List, Tuple

import numpy as np

from network.architecture import ArchitectureSpec
from network.dynamics import IntentionState
from network.params import NetworkParams, param_layout
from training.trainer import EpochRecord, TrainedModel
from utils.errors import CheckpointError, MissingFileError, VersionMismatchError

MAGIC = b"PMST"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


def _tensor_manifest(model: TrainedModel) -> List[Tuple[str, np.ndarray]]:
    tensors = [(name, model.params[name]) for name, _, _ in param_layout(model.arch)]
    for label, intention in zip(model.labels, model.intentions):
        for level, array in enumerate(intention.f_hat, start=1):
            tensors.append((f"intention/{label}/f_hat/{level}", array))
        for level, array in enumerate(intention.c_hat, start=1):
            tensors.append((f"intention/{label}/c_hat/{level}", array))
    return tensors


def encode_checkpoint(model: TrainedModel) -> bytes:
    """Serialize a model to checkpoint bytes."""
    model.params.check_against(model.arch)
    if len(set(model.labels)) != len(model.labels):
        raise CheckpointError("Sequence labels must be unique to be stored")
    tensors = _tensor_manifest(model)
    header = {
        "version": FORMAT_VERSION,
        "arch": model.arch.to_dict(),
        "labels": list(model.labels),
        "seed": model.seed,
        "log": [
            {"epoch": r.epoch, "open_mse": r.open_mse, "closed_mse": r.closed_mse,
             "wall_seconds": r.wall_seconds, "stage": r.stage}
            for r in model.log
        ],
        "tensors": [{"name": name, "shape": list(array.shape)} for name, array in tensors],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(array, dtype=_FLOAT).tobytes() for _, array in tensors)
    body = header_bytes + payload
    return MAGIC + _U32.pack(FORMAT_VERSION) + _U32.pack(len(header_bytes)) + body + _U32.pack(zlib.crc32(body))


def decode_checkpoint(data: bytes) -> TrainedModel:
    """Parse checkpoint bytes; raises before any partial model is built."""
    prefix = len(MAGIC) + 2 * _U32.size
    if len(data) < prefix + _U32.size:
        raise CheckpointError("Checkpoint is truncated (incomplete preamble)")
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a checkpoint file (bad magic bytes)")
    (version,) = _U32.unpack_from(data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"Checkpoint version {version} is not supported (expected {FORMAT_VERSION})")
    (header_len,) = _U32.unpack_from(data, len(MAGIC) + _U32.size)
    if len(data) < prefix + header_len + _U32.size:
        raise CheckpointError("Checkpoint is truncated (incomplete header)")

    try:
        header = json.loads(data[prefix:prefix + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint header: {e}") from e
    manifest = header.get("tensors", [])
    counts = [int(np.prod(entry["shape"], dtype=np.int64)) for entry in manifest]
    payload_len = sum(counts) * _FLOAT.itemsize
    end = prefix + header_len + payload_len
    if len(data) < end + _U32.size:
        raise CheckpointError(f"Checkpoint is truncated: expected {end + _U32.size} bytes, found {len(data)}")
    if len(data) > end + _U32.size:
        raise CheckpointError("Checkpoint has trailing bytes")
    (stored_crc,) = _U32.unpack_from(data, end)
    if zlib.crc32(data[prefix:end]) != stored_crc:
        raise CheckpointError("Checkpoint CRC mismatch (file is corrupt)")

    arrays: Dict[str, np.ndarray] = {}
    offset = prefix + header_len
    for entry, count in zip(manifest, counts):
        arrays[entry["name"]] = np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset) \
            .astype(np.float64).reshape(entry["shape"])
        offset += count * _FLOAT.itemsize

    arch = ArchitectureSpec.from_dict(header["arch"])
    try:
        params = NetworkParams({name: arrays[name] for name, _, _ in param_layout(arch)})
        intentions = [
            IntentionState(
                f_hat=[arrays[f"intention/{label}/f_hat/{level}"] for level in range(1, arch.num_layers + 1)],
                c_hat=[arrays[f"intention/{label}/c_hat/{level}"] for level in range(1, arch.num_layers + 1)],
            )
            for label in header["labels"]
        ]
    except KeyError as e:
        raise CheckpointError(f"Checkpoint is missing tensor {e}") from None
    params.check_against(arch)
    for intention in intentions:
        intention.check_against(arch)
    log = [EpochRecord(**record) for record in header["log"]]
    return TrainedModel(arch=arch, params=params, intentions=intentions, labels=list(header["labels"]),
                        log=log, seed=header["seed"])


def save_checkpoint(model: TrainedModel, path: str, verbose: bool = True):
    """Write a checkpoint atomically (temporary file, then rename)."""
    data = encode_checkpoint(model)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
    if verbose:
        print(f"[Checkpoint] Saved {len(model.labels)} intentions, "
              f"{model.params.num_values():,} parameters to {path}")


def load_checkpoint(path: str, verbose: bool = True) -> TrainedModel:
    if not os.path.exists(path):
        raise MissingFileError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        data = f.read()
    model = decode_checkpoint(data)
    if verbose:
        print(f"[Checkpoint] Loaded {path} (stage {model.stage}, {len(model.labels)} sequences)")
    return model
