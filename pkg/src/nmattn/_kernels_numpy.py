"""Pure-numpy fallback kernels.

Mirrors the numba kernel API with vectorized operations that preserve the
same per-element accumulation order (ascending reduction index; row sums
taken sequentially via cumsum). Tiling arguments affect only traversal in
the jitted backend, so the GEMM here ignores them without changing any
output bit. The fused SDDMM still walks tile by tile: only one tile of
dense scores is ever live, matching the zero-overhead structural contract.
"""

from __future__ import annotations

import numpy as np

from .codec import SparsityMode, _select_rows


def gemm_abt(a, b, scale, tile_rows, tile_cols, k_panel):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[:, k]
    out *= scale
    return out


def row_softmax_dense(x):
    mx = x.max(axis=1, keepdims=True)
    e = np.exp(x - mx)
    denom = np.cumsum(e, axis=1)[:, -1:]
    return e / denom


def softmax_nonzeros(nz, present):
    shifted = np.where(present, nz, -np.inf)
    mx = shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted - mx)  # exp(-inf) == 0, so absent slots add nothing
    denom = np.cumsum(e, axis=1)[:, -1:]
    return e / denom


def spmm_gather(nz, cols, present, v):
    vals = np.where(present, nz, 0.0)
    safe_cols = np.where(present, cols, 0)
    out = np.zeros((nz.shape[0], v.shape[1]))
    for c in range(nz.shape[1]):
        out += vals[:, c : c + 1] * v[safe_cols[:, c]]
    return out


def sddmm_compress(q, kmat, scale, group_size, tile_rows, tile_cols, keep):
    n = q.shape[0]
    m = kmat.shape[0]
    mode = SparsityMode.ONE_OF_TWO if group_size == 2 else SparsityMode.TWO_OF_FOUR
    nonzeros = np.zeros((n, m // 2))
    meta = np.zeros((n, m // group_size), dtype=np.uint8)
    peak = 0
    nnz_written = 0
    nib_written = 0
    for ti in range(keep.shape[0]):
        i0 = ti * tile_rows
        i1 = min(i0 + tile_rows, n)
        for tj in range(keep.shape[1]):
            if not keep[ti, tj]:
                continue
            j0 = tj * tile_cols
            j1 = min(j0 + tile_cols, m)
            peak = max(peak, (i1 - i0) * (j1 - j0))
            tile = np.zeros((i1 - i0, j1 - j0))
            for k in range(q.shape[1]):
                tile += q[i0:i1, k : k + 1] * kmat[j0:j1, k]
            tile *= scale
            _, tile_nz, tile_nib = _select_rows(tile, mode)
            nonzeros[i0:i1, j0 // 2 : j1 // 2] = tile_nz
            meta[i0:i1, j0 // group_size : j1 // group_size] = tile_nib
            nnz_written += tile_nz.size
            nib_written += tile_nib.size
    return nonzeros, meta, peak, nnz_written, nib_written
