"""Score computation fused with pruning and compression.

``sddmm_prune`` produces the compressed attention scores straight from Q
and K: each score tile lives only in per-tile working storage, the
prune/encode epilogue runs on it, and only nonzeros plus nibbles are
written out. The full score matrix never exists, which is the structural
meaning of zero pruning overhead at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .codec import BlockMask, CompressedSparse, SparsityMode
from .dense import DenseMatrix


@dataclass(frozen=True)
class FusedStats:
    """Structural accounting for one fused run.

    ``dense_elems_written`` counts dense score elements written to any
    persistent output and is zero by construction; it is recorded so the
    zero-overhead contract stays testable.
    """

    peak_tile_elems: int
    dense_elems_written: int
    nonzeros_written: int
    nibbles_written: int

    def __post_init__(self) -> None:
        if self.dense_elems_written != 0:
            raise ValueError("fused path must not write dense score elements")


def sddmm_prune(
    q: DenseMatrix,
    k: DenseMatrix,
    mode: SparsityMode,
    scale: float,
    block_mask: BlockMask | None = None,
    *,
    tile_rows: int = 32,
    tile_cols: int = 64,
) -> tuple[CompressedSparse, FusedStats]:
    """Compute compress(Q K^T * scale) without materializing the scores.

    Bitwise-equal to the unfused ``compress_logical(gemm_scaled(q, k,
    scale), mode)`` on unmasked tiles; masked tiles are simply absent from
    the result. When a block mask is given, its tile dimensions define the
    fused tiling and must match ``tile_rows``/``tile_cols``.
    """
    if q.cols != k.cols:
        raise ValueError(f"shape mismatch: Q has d={q.cols}, K has d={k.cols}")
    n, m = q.rows, k.rows
    if m % mode.group_size != 0:
        raise ValueError(
            f"score columns {m} not group-aligned for mode {mode.value} "
            f"(need a multiple of {mode.group_size})"
        )
    if tile_cols % mode.group_size != 0 or tile_rows < 1:
        raise ValueError(
            f"tile {tile_rows}x{tile_cols} must have columns divisible by the "
            f"group size {mode.group_size}"
        )
    grid_rows = -(-n // tile_rows)
    grid_cols = -(-m // tile_cols)
    if block_mask is not None:
        if (block_mask.tile_rows, block_mask.tile_cols) != (tile_rows, tile_cols):
            raise ValueError(
                f"block mask tiles {block_mask.tile_rows}x{block_mask.tile_cols} "
                f"do not match the fused tiling {tile_rows}x{tile_cols}"
            )
        block_mask.check_covers(n, m)
        keep = block_mask.keep
    else:
        keep = np.ones((grid_rows, grid_cols), dtype=bool)

    nonzeros, meta, peak, nnz, nib = backend.kernels().sddmm_compress(
        q.data, k.data, float(scale), mode.group_size, tile_rows, tile_cols, keep
    )
    compressed = CompressedSparse(
        n, m, mode, nonzeros, meta.ravel(), block_mask=block_mask
    )
    stats = FusedStats(
        peak_tile_elems=int(peak),
        dense_elems_written=0,
        nonzeros_written=int(nnz),
        nibbles_written=int(nib),
    )
    return compressed, stats


def attention_sddmm(
    q: DenseMatrix,
    k: DenseMatrix,
    mode: SparsityMode,
    block_mask: BlockMask | None = None,
    *,
    tile_rows: int = 32,
    tile_cols: int = 64,
) -> tuple[CompressedSparse, FusedStats]:
    """Fused scores at the attention scale 1/sqrt(d)."""
    return sddmm_prune(
        q, k, mode, 1.0 / math.sqrt(q.cols), block_mask,
        tile_rows=tile_rows, tile_cols=tile_cols,
    )
