"""
Dataset containers: one self-describing binary file per sequence plus a
YAML manifest listing the files of a dataset directory.

Sequence layout (integers little-endian uint32):

    b"PMSV" | version | header length | header (UTF-8 JSON) | frames | CRC-32

The header records version, frame count, height, width, label, plan,
subject parameters and entry boundaries. Frames are 32-bit little-endian
floats, row-major.
"""

import json
import os
import struct
import zlib
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from dataset.generator import VideoSequence
from dataset.syntax import SubjectParams
from utils.errors import DataError, MissingFileError, VersionMismatchError

MAGIC = b"PMSV"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.yaml"
_U32 = struct.Struct("<I")
_FRAME = np.dtype("<f4")


def encode_sequence(seq: VideoSequence) -> bytes:
    frames = np.ascontiguousarray(seq.frames, dtype=_FRAME)
    if frames.ndim != 3:
        raise DataError(f"Frames must be (T, H, W), got shape {frames.shape}")
    header = {
        "version": FORMAT_VERSION,
        "frames": int(frames.shape[0]),
        "height": int(frames.shape[1]),
        "width": int(frames.shape[2]),
        "label": seq.label,
        "plan": [[name, int(cycles)] for name, cycles in seq.plan],
        "subject": seq.subject.to_dict(),
        "boundaries": [int(b) for b in seq.boundaries],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = header_bytes + frames.tobytes()
    return MAGIC + _U32.pack(FORMAT_VERSION) + _U32.pack(len(header_bytes)) + body + _U32.pack(zlib.crc32(body))


def decode_sequence(data: bytes) -> VideoSequence:
    prefix = len(MAGIC) + 2 * _U32.size
    if len(data) < prefix + _U32.size or data[:len(MAGIC)] != MAGIC:
        raise DataError("Not a sequence container (bad magic or truncated)")
    (version,) = _U32.unpack_from(data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"Sequence container version {version} is not supported")
    (header_len,) = _U32.unpack_from(data, len(MAGIC) + _U32.size)
    try:
        header = json.loads(data[prefix:prefix + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"Corrupt sequence header: {e}") from e
    count = header["frames"] * header["height"] * header["width"]
    end = prefix + header_len + count * _FRAME.itemsize
    if len(data) != end + _U32.size:
        raise DataError(f"Sequence container is truncated or padded: expected {end + _U32.size} bytes")
    (stored_crc,) = _U32.unpack_from(data, end)
    if zlib.crc32(data[prefix:end]) != stored_crc:
        raise DataError("Sequence container CRC mismatch")
    frames = np.frombuffer(data, dtype=_FRAME, count=count, offset=prefix + header_len) \
        .astype(np.float32).reshape(header["frames"], header["height"], header["width"])
    return VideoSequence(
        frames=frames,
        label=header["label"],
        plan=[(name, int(cycles)) for name, cycles in header["plan"]],
        subject=SubjectParams.from_dict(header["subject"]),
        boundaries=list(header["boundaries"]),
    )


def _file_name(index: int, label: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)
    return f"{index:03d}_{safe}.pmsv"


def save_sequence(seq: VideoSequence, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_sequence(seq))


def load_sequence(path: str) -> VideoSequence:
    if not os.path.exists(path):
        raise MissingFileError(f"Sequence file not found: {path}")
    with open(path, "rb") as f:
        return decode_sequence(f.read())


def save_dataset(directory: str, sequences: Sequence[VideoSequence], role: str = "train",
                 manifest: Optional[Dict] = None) -> Dict:
    """
    Write sequences into a directory and append them to its manifest.

    Args:
        directory: Dataset directory (created if needed)
        sequences: Sequences to store
        role: Group name in the manifest ("train", "concat", "test", ...)
        manifest: Existing manifest to extend (read from disk when None)

    Returns:
        The updated manifest
    """
    os.makedirs(directory, exist_ok=True)
    if manifest is None:
        manifest = read_manifest(directory) if os.path.exists(os.path.join(directory, MANIFEST_NAME)) \
            else {"version": FORMAT_VERSION, "groups": {}}
    groups = manifest.setdefault("groups", {})
    entries = []
    offset = sum(len(items) for items in groups.values())
    for k, seq in enumerate(sequences):
        name = _file_name(offset + k, seq.label)
        save_sequence(seq, os.path.join(directory, name))
        entries.append({"file": name, "label": seq.label, "frames": len(seq),
                        "subject": seq.subject.to_dict()})
    groups[role] = groups.get(role, []) + entries
    with open(os.path.join(directory, MANIFEST_NAME), "w") as f:
        yaml.safe_dump(manifest, f, sort_keys=True, default_flow_style=False)
    print(f"[Dataset] Wrote {len(entries)} '{role}' sequences to {directory}")
    return manifest


def read_manifest(directory: str) -> Dict:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingFileError(f"Dataset manifest not found: {path}")
    with open(path, "r") as f:
        manifest = yaml.safe_load(f) or {}
    if "groups" not in manifest:
        raise DataError(f"Malformed dataset manifest: {path}")
    return manifest


def load_dataset(directory: str, role: str = "train") -> List[VideoSequence]:
    """Load every sequence listed under one manifest group, in manifest order."""
    manifest = read_manifest(directory)
    entries = manifest["groups"].get(role)
    if entries is None:
        raise DataError(f"Dataset {directory} has no '{role}' sequences "
                        f"(groups: {', '.join(manifest['groups']) or 'none'})")
    return [load_sequence(os.path.join(directory, entry["file"])) for entry in entries]
