"""Standalone writer for the afprobe feature format.

Deliberately independent of the afprobe package: the binary layout is the
contract between the two sides, and the cross-language golden-bytes test
parses these files with the primary reader.

    magic "AFPR" | version u16 | reserved u16 | n_frames u32 | dim u32
    | frame_rate f32 | offset f32 | utterance_id_len u16
    | utterance_id UTF-8 | payload f32 row-major   (all little-endian)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sHHIIffH")
MAGIC = b"AFPR"
VERSION = 1


def write_afpr(
    destination: str | Path,
    utterance_id: str,
    frame_rate: float,
    offset: float,
    data: np.ndarray,
) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"feature data must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite features for {utterance_id!r}")
    uid = utterance_id.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise ValueError("utterance_id too long")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        0,
        arr.shape[0],
        arr.shape[1],
        np.float32(frame_rate),
        np.float32(offset),
        len(uid),
    )
    with open(destination, "wb") as fh:
        fh.write(header)
        fh.write(uid)
        fh.write(arr.tobytes())
