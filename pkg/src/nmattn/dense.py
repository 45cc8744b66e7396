"""Dense matrix container and the reference attention path.

Everything here is plain float64. The tiled multiply accumulates every
output element in ascending-k order into a single accumulator, which makes
results bit-identical regardless of tile configuration and lets the fused
sparse path reproduce the dense scores exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major 2-D array of scores or embedding values.

    Entries must be finite; NaN/Inf inputs are rejected on construction.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"matrix dimensions must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("matrix entries must be finite (no NaN/Inf)")
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DenseMatrix":
        return cls(np.zeros((rows, cols)))


@dataclass(frozen=True)
class AttentionInputs:
    """Query/key/value matrices sharing sequence length n and head dim d."""

    q: DenseMatrix
    k: DenseMatrix
    v: DenseMatrix

    def __post_init__(self) -> None:
        n, d = self.q.shape
        if self.k.shape != (n, d) or self.v.shape != (n, d):
            raise ValueError(
                f"Q, K, V must share shape (n, d); got {self.q.shape}, "
                f"{self.k.shape}, {self.v.shape}"
            )

    @property
    def n(self) -> int:
        return self.q.rows

    @property
    def d(self) -> int:
        return self.q.cols


def gemm_scaled(
    a: DenseMatrix,
    b: DenseMatrix,
    scale: float,
    *,
    tile_rows: int = 64,
    tile_cols: int = 64,
    k_panel: int = 32,
) -> DenseMatrix:
    """Cache-tiled ``out[i, j] = scale * sum_k a[i, k] * b[j, k]``.

    Accumulation per element is strictly ascending in k (a single running
    accumulator), so the result is bitwise-deterministic and independent of
    the tiling, which only controls traversal order.
    """
    if a.cols != b.cols:
        raise ValueError(
            f"shape mismatch: inner dims differ ({a.cols} vs {b.cols})"
        )
    if min(tile_rows, tile_cols, k_panel) < 1:
        raise ValueError("tile sizes and k panel must be >= 1")
    out = backend.kernels().gemm_abt(
        a.data, b.data, float(scale), tile_rows, tile_cols, k_panel
    )
    return DenseMatrix(out)


def attention_scores(inputs: AttentionInputs) -> DenseMatrix:
    """Scaled score matrix Q K^T / sqrt(d)."""
    return gemm_scaled(inputs.q, inputs.k, 1.0 / math.sqrt(inputs.d))


def dense_attention_weights(inputs: AttentionInputs) -> DenseMatrix:
    """Row-softmaxed score matrix (the full n x n attention weights)."""
    scores = attention_scores(inputs)
    return DenseMatrix(backend.kernels().row_softmax_dense(scores.data))


def full_attention(inputs: AttentionInputs) -> DenseMatrix:
    """Baseline attention: softmax(Q K^T / sqrt(d)) V."""
    weights = dense_attention_weights(inputs)
    vt = DenseMatrix(np.ascontiguousarray(inputs.v.data.T))
    return gemm_scaled(weights, vt, 1.0)
