"""MVCT tensor files.

Layout (all integers little-endian)::

    4D 56 43 54          magic "MVCT"
    u32 version          1
    u32 rank             must be 2
    u32 dims[2]          rows, cols
    f32[rows*cols]       row-major payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import (
    BadMagicError,
    BadRankError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"MVCT"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def encode_tensor(t: np.ndarray) -> bytes:
    arr = np.asarray(t)
    if arr.ndim != 2:
        raise BadRankError(f"MVCT stores rank-2 tensors only, got rank {arr.ndim}")
    rows, cols = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, 2) + struct.pack("<II", rows, cols) + payload


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not an MVCT tensor (bad magic)")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("MVCT header truncated")
    _, version, rank = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"MVCT version {version} not supported")
    if rank != 2:
        raise BadRankError(f"MVCT rank must be 2, got {rank}")
    off = _HEADER.size
    if len(data) < off + 8:
        raise TruncatedPayloadError("MVCT dims truncated")
    rows, cols = struct.unpack_from("<II", data, off)
    off += 8
    need = rows * cols * 4
    if len(data) - off < need:
        raise TruncatedPayloadError(
            f"MVCT payload truncated: need {need} bytes for {rows}x{cols}, have {len(data) - off}"
        )
    payload = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=off)
    return payload.reshape(rows, cols).astype(np.float32)


def write_tensor(t: np.ndarray, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(t))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read an MVCT file. Returns float32 so payloads round-trip bitwise."""
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())
