"""Binary checkpoint and dataset container formats."""

from .checkpoint import FORMAT_VERSION, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .containers import (
    decode_sequence,
    encode_sequence,
    load_dataset,
    load_sequence,
    read_manifest,
    save_dataset,
    save_sequence,
)

__all__ = [
    "FORMAT_VERSION",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "decode_sequence",
    "encode_sequence",
    "load_dataset",
    "load_sequence",
    "read_manifest",
    "save_dataset",
    "save_sequence",
]
