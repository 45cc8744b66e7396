"""N:M group selection and the compressed nonzeros+metadata format.

Both supported modes keep 50% of each row. A group always spans four
two-byte slots: under 1:2 each 32-bit element occupies two slots and the
larger of two consecutive elements survives; under 2:4 each element is one
slot and the two largest of four consecutive elements survive. One 4-bit
nibble per group records the surviving slot pair as ``lo + (hi << 2)``.

The tile-interleaved layout reproduces the hardware metadata reordering:
rows interleaved by 8 within 32-row tiles, a 2x2 sub-diagonal block switch,
and an interleaved column-major stream of fused 4-byte units.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dense import DenseMatrix

#: Two-byte slots per metadata group (same for both modes).
GROUP_SLOTS = 4

#: Nibbles packed into one 2-byte metadata block.
NIBBLES_PER_BLOCK = 4

#: 2-byte blocks fused into one 4-byte write unit.
BLOCKS_PER_UNIT = 2


class SparsityMode(enum.Enum):
    """Which N:M pattern is in force (1:2 for 32-bit, 2:4 for 16-bit data)."""

    ONE_OF_TWO = "1:2"
    TWO_OF_FOUR = "2:4"

    @classmethod
    def parse(cls, text: str) -> "SparsityMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValueError(f"unknown sparsity mode {text!r} (expected '1:2' or '2:4')")

    @property
    def group_size(self) -> int:
        """Elements per selection group."""
        return 2 if self is SparsityMode.ONE_OF_TWO else 4

    @property
    def kept_per_group(self) -> int:
        return 1 if self is SparsityMode.ONE_OF_TWO else 2

    @property
    def slots_per_element(self) -> int:
        return 2 if self is SparsityMode.ONE_OF_TWO else 1

    @property
    def admissible_nibbles(self) -> frozenset[int]:
        if self is SparsityMode.ONE_OF_TWO:
            return frozenset({0x4, 0xE})
        return frozenset({0x4, 0x8, 0x9, 0xC, 0xD, 0xE})


class Layout(enum.Enum):
    LOGICAL = "logical"
    TILE_INTERLEAVED = "tile-interleaved"


def nibble_for_slots(lo: int, hi: int) -> int:
    """Nibble encoding of a surviving slot pair; requires ``lo < hi``."""
    if not (0 <= lo < hi < GROUP_SLOTS):
        raise ValueError(f"slot pair ({lo}, {hi}) must be strictly increasing in [0, 4)")
    return lo | (hi << 2)


def slots_for_nibble(nibble: int) -> tuple[int, int]:
    """Decode a nibble into its slot pair; rejects non-increasing pairs."""
    lo = nibble & 0x3
    hi = (nibble >> 2) & 0x3
    if not (0 <= lo < hi < GROUP_SLOTS):
        raise ValueError(f"malformed nibble 0x{nibble:x}: slot pair ({lo}, {hi}) not strictly increasing")
    return lo, hi


def kept_elements(nibble: int, mode: SparsityMode) -> tuple[int, ...]:
    """Element indices within the group that a nibble marks as kept."""
    lo, hi = slots_for_nibble(nibble)
    if nibble not in mode.admissible_nibbles:
        raise ValueError(f"malformed nibble 0x{nibble:x} for mode {mode.value}")
    if mode is SparsityMode.ONE_OF_TWO:
        return (lo // 2,)
    return (lo, hi)


class GroupSelection(NamedTuple):
    kept: tuple[int, ...]      # element indices kept within the group
    slots: tuple[int, int]     # surviving slot pair on the 4-slot grid
    nibble: int


def select_group(values, mode: SparsityMode) -> GroupSelection:
    """Pick the largest N of M consecutive values (signed order, ties low).

    Returns the kept element indices, the surviving slot pair, and the
    metadata nibble. 1:2 keeps element 0 -> slots (0, 1) -> 0x4 and element
    1 -> slots (2, 3) -> 0xe.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (mode.group_size,):
        raise ValueError(
            f"expected a group of {mode.group_size} values for mode {mode.value}, "
            f"got shape {vals.shape}"
        )
    if mode is SparsityMode.ONE_OF_TWO:
        kept = 1 if vals[1] > vals[0] else 0
        slots = (2 * kept, 2 * kept + 1)
        return GroupSelection((kept,), slots, nibble_for_slots(*slots))
    order = np.argsort(-vals, kind="stable")
    lo, hi = sorted(int(i) for i in order[:2])
    return GroupSelection((lo, hi), (lo, hi), nibble_for_slots(lo, hi))


@dataclass(frozen=True, eq=False)
class PruneMask:
    """Boolean keep-mask with exactly N true entries per M-group per row."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        object.__setattr__(self, "bits", arr)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    def density(self) -> float:
        return float(self.bits.mean())


@dataclass(frozen=True, eq=False)
class BlockMask:
    """Tile-grid keep mask for hybrid blocked-ELL sparsity.

    ``keep[i, j]`` covers dense rows ``[i*tile_rows, (i+1)*tile_rows)`` and
    dense columns ``[j*tile_cols, (j+1)*tile_cols)``; edge tiles may be
    ragged. Masked tiles are structurally absent: no nonzeros or metadata
    are ever emitted for them.
    """

    keep: np.ndarray
    tile_rows: int = 32
    tile_cols: int = 64

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.keep, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("block mask grid must be 2-D")
        if self.tile_rows < 1 or self.tile_cols < 1:
            raise ValueError("tile dimensions must be >= 1")
        object.__setattr__(self, "keep", arr)

    @property
    def grid_rows(self) -> int:
        return self.keep.shape[0]

    @property
    def grid_cols(self) -> int:
        return self.keep.shape[1]

    def check_covers(self, rows: int, cols: int) -> None:
        want = (-(-rows // self.tile_rows), -(-cols // self.tile_cols))
        if (self.grid_rows, self.grid_cols) != want:
            raise ValueError(
                f"block mask grid {self.keep.shape} does not match the "
                f"{want[0]}x{want[1]} tile grid of a {rows}x{cols} matrix"
            )

    def dense_keep(self, rows: int, cols: int) -> np.ndarray:
        """Expand the grid to a per-entry boolean matrix."""
        self.check_covers(rows, cols)
        out = np.repeat(np.repeat(self.keep, self.tile_rows, 0), self.tile_cols, 1)
        return np.ascontiguousarray(out[:rows, :cols])

    def nonzero_keep(self, rows: int, dense_cols: int) -> np.ndarray:
        """Presence mask at nonzero resolution (tile_cols must be even)."""
        if self.tile_cols % 2:
            raise ValueError("tile_cols must be even to map tiles onto nonzeros")
        self.check_covers(rows, dense_cols)
        out = np.repeat(np.repeat(self.keep, self.tile_rows, 0), self.tile_cols // 2, 1)
        return np.ascontiguousarray(out[:rows, : dense_cols // 2])


@dataclass(frozen=True, eq=False)
class CompressedSparse:
    """Nonzeros (N/M of dense) plus a 4-bit-nibble metadata stream.

    ``metadata`` is a flat nibble array: row-major group order under the
    LOGICAL layout, final hardware write order under TILE_INTERLEAVED.
    A block mask, when present, marks whole tiles as absent; their regions
    in the backing arrays are zero filler and carry no information.
    """

    rows: int
    dense_cols: int
    mode: SparsityMode
    nonzeros: np.ndarray
    metadata: np.ndarray
    layout: Layout = Layout.LOGICAL
    block_mask: BlockMask | None = None

    def __post_init__(self) -> None:
        nz = np.ascontiguousarray(self.nonzeros, dtype=np.float64)
        meta = np.ascontiguousarray(self.metadata, dtype=np.uint8).ravel()
        if self.rows < 1 or self.dense_cols < 1:
            raise ValueError("rows and dense_cols must be positive")
        if self.dense_cols % self.mode.group_size != 0:
            raise ValueError(
                f"dense_cols={self.dense_cols} not divisible by group size "
                f"{self.mode.group_size}"
            )
        if nz.shape != (self.rows, self.dense_cols // 2):
            raise ValueError(
                f"nonzeros shape {nz.shape} != ({self.rows}, {self.dense_cols // 2})"
            )
        if meta.size != self.rows * self.nibbles_per_row:
            raise ValueError(
                f"metadata holds {meta.size} nibbles, expected "
                f"{self.rows * self.nibbles_per_row}"
            )
        object.__setattr__(self, "nonzeros", nz)
        object.__setattr__(self, "metadata", meta)
        if self.block_mask is not None:
            if self.layout is not Layout.LOGICAL:
                raise ValueError("block-masked matrices only support the logical layout")
            self.block_mask.check_covers(self.rows, self.dense_cols)
        self._check_nibbles()

    def _check_nibbles(self) -> None:
        legal = np.zeros(16, dtype=bool)
        legal[list(self.mode.admissible_nibbles)] = True
        if self.block_mask is None:
            bad = ~legal[self.metadata]
        else:
            grid = self.block_mask.dense_keep(self.rows, self.dense_cols)
            present = grid[:, :: self.mode.group_size].ravel()
            bad = present & ~legal[self.metadata]
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"malformed nibble 0x{int(self.metadata[idx]):x} at position {idx} "
                f"for mode {self.mode.value}"
            )

    @property
    def nibbles_per_row(self) -> int:
        return self.dense_cols // self.mode.group_size

    @property
    def nonzero_cols(self) -> int:
        return self.dense_cols // 2

    def meta_grid(self) -> np.ndarray:
        """Metadata as a (rows, nibbles_per_row) view; logical layout only."""
        if self.layout is not Layout.LOGICAL:
            raise ValueError("metadata grid is only defined for the logical layout")
        return self.metadata.reshape(self.rows, self.nibbles_per_row)

    def present_nonzeros(self) -> np.ndarray:
        """Boolean presence of each stored nonzero (False in masked tiles)."""
        if self.block_mask is None:
            return np.ones((self.rows, self.nonzero_cols), dtype=bool)
        return self.block_mask.nonzero_keep(self.rows, self.dense_cols)


# ---------------------------------------------------------------------------
# Selection and logical compression


def _select_rows(values: np.ndarray, mode: SparsityMode):
    """Vectorized per-group selection over a (rows, cols) score array.

    Returns (kept_mask rows x cols bool, nonzeros rows x cols/2,
    nibbles rows x groups uint8). Selection order is signed value with ties
    broken toward the lower index, matching ``select_group``.
    """
    rows, cols = values.shape
    gs = mode.group_size
    grouped = values.reshape(rows, cols // gs, gs)
    if mode is SparsityMode.ONE_OF_TWO:
        second = grouped[:, :, 1] > grouped[:, :, 0]
        kept = np.zeros(grouped.shape, dtype=bool)
        kept[:, :, 0] = ~second
        kept[:, :, 1] = second
        nonzeros = np.where(second, grouped[:, :, 1], grouped[:, :, 0])
        nibbles = np.where(second, 0xE, 0x4).astype(np.uint8)
        return kept.reshape(rows, cols), nonzeros, nibbles
    order = np.argsort(-grouped, axis=2, kind="stable")
    top2 = np.sort(order[:, :, :2], axis=2)
    kept = np.zeros(grouped.shape, dtype=bool)
    np.put_along_axis(kept, top2, True, axis=2)
    nonzeros = np.take_along_axis(grouped, top2, axis=2).reshape(rows, cols // 2)
    nibbles = (top2[:, :, 0] | (top2[:, :, 1] << 2)).astype(np.uint8)
    return kept.reshape(rows, cols), nonzeros, nibbles


def _require_group_aligned(cols: int, mode: SparsityMode) -> None:
    if cols % mode.group_size != 0:
        raise ValueError(
            f"column count {cols} not divisible by group size {mode.group_size} "
            f"(mode {mode.value})"
        )


def prune_dense(m: DenseMatrix, mode: SparsityMode) -> tuple[DenseMatrix, PruneMask]:
    """Zero the dropped entries of every group; returns (pruned, mask)."""
    _require_group_aligned(m.cols, mode)
    kept, _, _ = _select_rows(m.data, mode)
    return DenseMatrix(np.where(kept, m.data, 0.0)), PruneMask(kept)


def compress_logical(m: DenseMatrix, mode: SparsityMode) -> CompressedSparse:
    """Compress a dense matrix to nonzeros + metadata (logical layout)."""
    _require_group_aligned(m.cols, mode)
    _, nonzeros, nibbles = _select_rows(m.data, mode)
    return CompressedSparse(m.rows, m.cols, mode, nonzeros, nibbles.ravel())


# Per-nibble element offsets within a group; -1 marks slots that do not
# decode for the mode (validation rejects them before use).
_DECODE_LO = np.full(16, -1, dtype=np.int64)
_DECODE_HI = np.full(16, -1, dtype=np.int64)
for _nib in SparsityMode.TWO_OF_FOUR.admissible_nibbles:
    _DECODE_LO[_nib], _DECODE_HI[_nib] = slots_for_nibble(_nib)


def nonzero_columns(c: CompressedSparse) -> np.ndarray:
    """Dense column index of every stored nonzero (-1 in masked tiles)."""
    if c.layout is not Layout.LOGICAL:
        raise ValueError("column decode requires the logical layout")
    meta = c.meta_grid().astype(np.int64)
    groups = np.arange(c.nibbles_per_row, dtype=np.int64)
    if c.mode is SparsityMode.ONE_OF_TWO:
        cols = 2 * groups[None, :] + (meta == 0xE)
    else:
        base = 4 * groups[None, :]
        cols = np.stack((base + _DECODE_LO[meta], base + _DECODE_HI[meta]), axis=2)
        cols = cols.reshape(c.rows, c.nonzero_cols)
    if c.block_mask is not None:
        cols = np.where(c.present_nonzeros(), cols, -1)
    return np.ascontiguousarray(cols)


def decompress(c: CompressedSparse) -> DenseMatrix:
    """Scatter nonzeros back to dense positions; masked tiles stay zero."""
    if c.layout is not Layout.LOGICAL:
        raise ValueError("decompress requires the logical layout (decode tiles first)")
    cols = nonzero_columns(c)
    out = np.zeros((c.rows, c.dense_cols))
    present = c.present_nonzeros()
    rows_idx, nz_idx = np.nonzero(present)
    out[rows_idx, cols[rows_idx, nz_idx]] = c.nonzeros[rows_idx, nz_idx]
    return DenseMatrix(out)


# ---------------------------------------------------------------------------
# Tile-interleaved hardware layout


def interleaved_row(row: int, tile_rows: int = 32) -> int:
    """Destination row after interleaving metadata rows by 8 within a tile."""
    if tile_rows % 8 != 0:
        raise ValueError("tile_rows must be a multiple of 8")
    base = (row // tile_rows) * tile_rows
    return base + (row % 8) * (tile_rows // 8) + (row % tile_rows) // 8


def _tile_stream_indices(rows: int, nibble_cols: int, tile_rows: int) -> np.ndarray:
    """Flat logical-nibble index feeding each stream position, in order.

    Encodes the three reordering steps: row interleave, 2x2 sub-diagonal
    block switch, and the column-major walk over fused 4-byte units.
    """
    if tile_rows % 8 != 0:
        raise ValueError("tile_rows must be a multiple of 8")
    if rows % tile_rows != 0:
        raise ValueError(f"shape not tile-aligned: {rows} rows not divisible by {tile_rows}")
    if nibble_cols % (NIBBLES_PER_BLOCK * BLOCKS_PER_UNIT) != 0:
        raise ValueError(
            f"shape not tile-aligned: {nibble_cols} nibble columns not divisible "
            f"by {NIBBLES_PER_BLOCK * BLOCKS_PER_UNIT} (one 64-byte tile width)"
        )
    idx = np.arange(rows * nibble_cols, dtype=np.int64).reshape(rows, nibble_cols)

    src = np.arange(rows)
    dst = (src // tile_rows) * tile_rows + (src % 8) * (tile_rows // 8) + (src % tile_rows) // 8
    interleaved = np.empty_like(idx)
    interleaved[dst] = idx

    blocks = interleaved.reshape(rows, nibble_cols // NIBBLES_PER_BLOCK, NIBBLES_PER_BLOCK)
    switched = blocks.copy()
    switched[0::2, 1::2] = blocks[1::2, 0::2]
    switched[1::2, 0::2] = blocks[0::2, 1::2]

    unit_nibbles = NIBBLES_PER_BLOCK * BLOCKS_PER_UNIT
    units = switched.reshape(rows, nibble_cols // unit_nibbles, unit_nibbles)
    return np.ascontiguousarray(units.transpose(1, 0, 2)).ravel()


def tile_layout_encode(c: CompressedSparse, tile_rows: int = 32) -> CompressedSparse:
    """Reorder logical metadata into the interleaved hardware stream."""
    if c.layout is not Layout.LOGICAL:
        raise ValueError("tile encode expects the logical layout")
    if c.block_mask is not None:
        raise ValueError("tile encode does not support block-masked matrices")
    stream = _tile_stream_indices(c.rows, c.nibbles_per_row, tile_rows)
    return CompressedSparse(
        c.rows, c.dense_cols, c.mode, c.nonzeros, c.metadata[stream],
        layout=Layout.TILE_INTERLEAVED,
    )


def tile_layout_decode(c: CompressedSparse, tile_rows: int = 32) -> CompressedSparse:
    """Exact inverse of :func:`tile_layout_encode`."""
    if c.layout is not Layout.TILE_INTERLEAVED:
        raise ValueError("tile decode expects the tile-interleaved layout")
    stream = _tile_stream_indices(c.rows, c.nibbles_per_row, tile_rows)
    logical = np.empty_like(c.metadata)
    logical[stream] = c.metadata
    return CompressedSparse(
        c.rows, c.dense_cols, c.mode, c.nonzeros, logical, layout=Layout.LOGICAL
    )


# ---------------------------------------------------------------------------
# Footprint accounting


def dense_payload_bits(rows: int, cols: int, element_bits: int = 32) -> int:
    """Bit count of the dense matrix payload at the given element width."""
    return rows * cols * element_bits


def compressed_payload_bits(c: CompressedSparse, element_bits: int = 32) -> int:
    """Payload bits of the compressed form: nonzeros plus 4-bit nibbles.

    With 32-bit elements this is exactly half the dense payload for the
    values plus one sixteenth for the metadata.
    """
    return c.nonzeros.size * element_bits + c.metadata.size * 4
