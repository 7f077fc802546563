"""TVDS dataset file reader (little-endian, version 1).

Independent of the builder side: only the byte layout is shared.
Header: magic "TVDS", u32 version, u32 patch_size, u8 noise_kind
(1 Gaussian, 0 Poisson), f32 noise_param, u64 count. Each record:
u32 source_id, u32 row, u32 col, f32 label, f32[patch_size^2] pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"TVDS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIBfQ")
_RECORD_FIXED = struct.Struct("<IIIf")


@dataclass
class PatchSet:
    """All patches of one TVDS file as stacked arrays."""

    patches: np.ndarray  # (count, size, size) float32
    labels: np.ndarray  # (count,) float32
    source_ids: np.ndarray  # (count,) int64
    noise_kind: int  # 1 Gaussian, 0 Poisson
    noise_param: float
    patch_size: int

    def __len__(self) -> int:
        return len(self.labels)


def read_tvds(path) -> PatchSet:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise ValueError(f"{path}: too short for a TVDS header")
    magic, version, patch_size, noise_kind, noise_param, count = _HEADER.unpack_from(buf, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad TVDS magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported TVDS version {version}")
    record_size = _RECORD_FIXED.size + 4 * patch_size * patch_size
    if len(buf) != _HEADER.size + count * record_size:
        raise ValueError(f"{path}: truncated or oversized payload")
    patches = np.empty((count, patch_size, patch_size), dtype=np.float32)
    labels = np.empty(count, dtype=np.float32)
    source_ids = np.empty(count, dtype=np.int64)
    offset = _HEADER.size
    for i in range(count):
        source_ids[i], _, _, labels[i] = _RECORD_FIXED.unpack_from(buf, offset)
        offset += _RECORD_FIXED.size
        patches[i] = np.frombuffer(
            buf, dtype="<f4", count=patch_size * patch_size, offset=offset
        ).reshape(patch_size, patch_size)
        offset += 4 * patch_size * patch_size
    return PatchSet(
        patches=patches,
        labels=labels,
        source_ids=source_ids,
        noise_kind=noise_kind,
        noise_param=noise_param,
        patch_size=patch_size,
    )
