"""Binary container for compressed matrices (NMCS format).

Byte layout (little-endian, documented in docs/nmcs_format.md):

    offset  size  field
    0       4     magic "NMCS"
    4       1     version (1)
    5       1     mode: 1 = 1:2, 2 = 2:4
    6       1     layout: 0 = logical, 1 = tile-interleaved
    7       4     rows (u32)
    11      4     dense_cols (u32)
    15      ...   nonzeros: rows * dense_cols/2 float64, row-major
    ...     ...   metadata nibbles packed two per byte, low nibble first;
                  a trailing odd nibble pads the high half with zero

Block-masked matrices cannot be serialized: the format has no mask field,
so the absent tiles would be indistinguishable from data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .codec import CompressedSparse, Layout, SparsityMode

MAGIC = b"NMCS"
VERSION = 1

_HEADER = struct.Struct("<4sBBBII")

_MODE_CODES = {SparsityMode.ONE_OF_TWO: 1, SparsityMode.TWO_OF_FOUR: 2}
_LAYOUT_CODES = {Layout.LOGICAL: 0, Layout.TILE_INTERLEAVED: 1}
_MODE_FROM_CODE = {v: k for k, v in _MODE_CODES.items()}
_LAYOUT_FROM_CODE = {v: k for k, v in _LAYOUT_CODES.items()}


def pack_nibbles(nibbles: np.ndarray) -> bytes:
    """Pack a nibble stream two per byte, low nibble first."""
    nibbles = np.ascontiguousarray(nibbles, dtype=np.uint8).ravel()
    if nibbles.size % 2:
        nibbles = np.append(nibbles, np.uint8(0))
    pairs = nibbles.reshape(-1, 2)
    return ((pairs[:, 0] & 0xF) | (pairs[:, 1] << 4)).astype(np.uint8).tobytes()


def unpack_nibbles(raw: bytes, count: int) -> np.ndarray:
    packed = np.frombuffer(raw, dtype=np.uint8)
    out = np.empty(packed.size * 2, dtype=np.uint8)
    out[0::2] = packed & 0xF
    out[1::2] = packed >> 4
    if count % 2 and out[count:].any():
        raise ValueError("container padding nibble is not zero")
    return out[:count]


def to_bytes(c: CompressedSparse) -> bytes:
    """Serialize a compressed matrix to the NMCS container."""
    if c.block_mask is not None:
        raise ValueError("block-masked matrices cannot be serialized (no mask field)")
    header = _HEADER.pack(
        MAGIC, VERSION, _MODE_CODES[c.mode], _LAYOUT_CODES[c.layout],
        c.rows, c.dense_cols,
    )
    body = np.ascontiguousarray(c.nonzeros, dtype="<f8").tobytes()
    return header + body + pack_nibbles(c.metadata)


def from_bytes(raw: bytes) -> CompressedSparse:
    """Parse an NMCS container, validating structure and nibble legality."""
    if len(raw) < _HEADER.size:
        raise ValueError(f"container truncated: {len(raw)} bytes < {_HEADER.size}-byte header")
    magic, version, mode_code, layout_code, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    if mode_code not in _MODE_FROM_CODE:
        raise ValueError(f"unknown mode code {mode_code}")
    if layout_code not in _LAYOUT_FROM_CODE:
        raise ValueError(f"unknown layout code {layout_code}")
    mode = _MODE_FROM_CODE[mode_code]
    if rows < 1 or cols < 1 or cols % mode.group_size != 0:
        raise ValueError(f"invalid dimensions {rows}x{cols} for mode {mode.value}")
    nz_count = rows * (cols // 2)
    nib_count = rows * (cols // mode.group_size)
    expected = _HEADER.size + 8 * nz_count + (nib_count + 1) // 2
    if len(raw) != expected:
        raise ValueError(f"container size {len(raw)} != expected {expected} bytes")
    nz_end = _HEADER.size + 8 * nz_count
    nonzeros = np.frombuffer(raw[_HEADER.size:nz_end], dtype="<f8").reshape(rows, cols // 2)
    if not np.isfinite(nonzeros).all():
        raise ValueError("container nonzeros contain NaN/Inf")
    nibbles = unpack_nibbles(raw[nz_end:], nib_count)
    # CompressedSparse validation rejects malformed nibbles
    return CompressedSparse(
        rows, cols, mode, nonzeros.copy(), nibbles, layout=_LAYOUT_FROM_CODE[layout_code]
    )


def write_container(c: CompressedSparse, path: str | Path) -> int:
    data = to_bytes(c)
    Path(path).write_bytes(data)
    return len(data)


def read_container(path: str | Path) -> CompressedSparse:
    return from_bytes(Path(path).read_bytes())
