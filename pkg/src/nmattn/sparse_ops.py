"""Operations on compressed matrices: per-row softmax and SpMM.

Softmax touches only the kept nonzeros of each row (three passes: max,
exponential sum, normalize); metadata is untouched. SpMM gathers rows of
the dense operand through the decoded column indices. Tiles removed by a
block mask contribute nothing to either.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .codec import BlockMask, CompressedSparse, Layout, nonzero_columns
from .dense import DenseMatrix


def softmax_rows(c: CompressedSparse) -> CompressedSparse:
    """Numerically stable softmax over each row's kept entries.

    Every output row sums to 1 over its kept entries; pruned slots stay
    zero on decompress. Rows whose tiles are all masked have nothing to
    normalize and are rejected, as is NaN input.
    """
    if c.layout is not Layout.LOGICAL:
        raise ValueError("softmax requires the logical layout")
    present = c.present_nonzeros()
    if not present.any(axis=1).all():
        row = int(np.flatnonzero(~present.any(axis=1))[0])
        raise ValueError(f"empty row {row}: all tiles masked, softmax undefined")
    if np.isnan(c.nonzeros[present]).any():
        raise ValueError("NaN in nonzeros, softmax rejected")
    out = backend.kernels().softmax_nonzeros(c.nonzeros, present)
    return CompressedSparse(
        c.rows, c.dense_cols, c.mode, out, c.metadata.copy(),
        layout=Layout.LOGICAL, block_mask=c.block_mask,
    )


def spmm(
    a: CompressedSparse,
    v: DenseMatrix,
    block_mask: BlockMask | None = None,
) -> DenseMatrix:
    """Multiply a compressed matrix by a dense one: decompress(a) @ v.

    The mask may come precomposed on ``a`` (as the fused path leaves it)
    or be passed explicitly, not both.
    """
    if a.layout is not Layout.LOGICAL:
        raise ValueError("spmm requires the logical layout")
    if a.dense_cols != v.rows:
        raise ValueError(
            f"shape mismatch: sparse operand is {a.rows}x{a.dense_cols}, "
            f"dense operand has {v.rows} rows"
        )
    if block_mask is not None and a.block_mask is not None:
        raise ValueError("block mask given both on the matrix and as an argument")
    if block_mask is not None:
        block_mask.check_covers(a.rows, a.dense_cols)
        a = CompressedSparse(
            a.rows, a.dense_cols, a.mode, a.nonzeros, a.metadata,
            layout=a.layout, block_mask=block_mask,
        )
    cols = nonzero_columns(a)
    present = a.present_nonzeros()
    out = backend.kernels().spmm_gather(a.nonzeros, cols, present, v.data)
    return DenseMatrix(out)
