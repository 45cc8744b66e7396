"""End-to-end dynamically pruned attention and comparison helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import BlockMask, SparsityMode, decompress
from .dense import AttentionInputs, DenseMatrix, dense_attention_weights
from .fused import attention_sddmm
from .sparse_ops import softmax_rows, spmm


def nm_attention(
    inputs: AttentionInputs,
    mode: SparsityMode,
    block_mask: BlockMask | None = None,
    *,
    tile_rows: int = 32,
    tile_cols: int = 64,
) -> DenseMatrix:
    """Drop-in sparse attention: fused prune -> sparse softmax -> SpMM.

    Equals the staged pipeline (dense scores, compress, softmax, SpMM)
    bitwise; no dense n x n matrix is materialized anywhere on this path.
    """
    compressed, _ = attention_sddmm(
        inputs.q, inputs.k, mode, block_mask,
        tile_rows=tile_rows, tile_cols=tile_cols,
    )
    return spmm(softmax_rows(compressed), inputs.v)


@dataclass(frozen=True)
class ApproxError:
    """Error of a sparse output against the full-attention baseline."""

    rel_l2: float
    max_abs: float
    row_rel: np.ndarray  # per-row relative l2 error

    def __str__(self) -> str:
        return f"rel_l2={self.rel_l2:.6e} max_abs={self.max_abs:.6e}"


def approx_error(full: DenseMatrix, sparse: DenseMatrix) -> ApproxError:
    """Relative Frobenius error, max absolute error, and per-row errors."""
    if full.shape != sparse.shape:
        raise ValueError(f"shape mismatch: {full.shape} vs {sparse.shape}")
    diff = full.data - sparse.data
    denom = np.linalg.norm(full.data)
    rel = float(np.linalg.norm(diff) / denom) if denom > 0 else 0.0
    row_norms = np.linalg.norm(full.data, axis=1)
    safe = np.where(row_norms > 0, row_norms, 1.0)
    row_rel = np.where(row_norms > 0, np.linalg.norm(diff, axis=1) / safe, 0.0)
    return ApproxError(rel, float(np.abs(diff).max()), row_rel)


@dataclass(frozen=True)
class AttentionWeights:
    """Dense and sparse attention-weight matrices, ready for export."""

    dense: DenseMatrix
    sparse: DenseMatrix


def attention_heatmap(inputs: AttentionInputs, mode: SparsityMode) -> AttentionWeights:
    """Both weight matrices for visualization.

    Renormalizing over the surviving half of each row can only grow the
    kept weights, so every kept entry of the sparse matrix is at least its
    dense counterpart.
    """
    dense = dense_attention_weights(inputs)
    compressed, _ = attention_sddmm(inputs.q, inputs.k, mode)
    sparse = decompress(softmax_rows(compressed))
    return AttentionWeights(dense, sparse)
