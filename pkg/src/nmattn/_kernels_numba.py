"""Numba-jitted hot kernels.

Every kernel keeps a strict per-output-element accumulation order
(ascending reduction index into a single accumulator, scale applied once
at the end), so results are bit-identical to the pure-numpy fallback for
the multiply kernels and independent of tile configuration. fastmath stays
off: reassociation or FMA contraction would break the bitwise contracts.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _gemm_abt(a, b, scale, tile_rows, tile_cols, k_panel):
    n, kdim = a.shape
    m = b.shape[0]
    out = np.zeros((n, m))
    for it in range(0, n, tile_rows):
        ih = min(it + tile_rows, n)
        for jt in range(0, m, tile_cols):
            jh = min(jt + tile_cols, m)
            for kt in range(0, kdim, k_panel):
                kh = min(kt + k_panel, kdim)
                for i in range(it, ih):
                    for j in range(jt, jh):
                        acc = out[i, j]
                        for k in range(kt, kh):
                            acc += a[i, k] * b[j, k]
                        out[i, j] = acc
    for i in range(n):
        for j in range(m):
            out[i, j] = out[i, j] * scale
    return out


def gemm_abt(a, b, scale, tile_rows, tile_cols, k_panel):
    return _gemm_abt(a, b, scale, tile_rows, tile_cols, k_panel)


@njit(cache=True)
def _row_softmax_dense(x):
    rows, cols = x.shape
    out = np.empty_like(x)
    for i in range(rows):
        mx = x[i, 0]
        for j in range(1, cols):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(cols):
            e = np.exp(x[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(cols):
            out[i, j] = out[i, j] / s
    return out


def row_softmax_dense(x):
    return _row_softmax_dense(x)


@njit(cache=True)
def _softmax_nonzeros(nz, present):
    rows, cols = nz.shape
    out = np.zeros_like(nz)
    for i in range(rows):
        mx = -np.inf
        for j in range(cols):
            if present[i, j] and nz[i, j] > mx:
                mx = nz[i, j]
        s = 0.0
        for j in range(cols):
            if present[i, j]:
                e = np.exp(nz[i, j] - mx)
                out[i, j] = e
                s += e
        for j in range(cols):
            if present[i, j]:
                out[i, j] = out[i, j] / s
    return out


def softmax_nonzeros(nz, present):
    return _softmax_nonzeros(nz, present)


@njit(cache=True)
def _spmm_gather(nz, cols, present, v):
    rows, nzc = nz.shape
    d = v.shape[1]
    out = np.zeros((rows, d))
    for i in range(rows):
        for c in range(nzc):
            if present[i, c]:
                val = nz[i, c]
                col = cols[i, c]
                for j in range(d):
                    out[i, j] += val * v[col, j]
    return out


def spmm_gather(nz, cols, present, v):
    return _spmm_gather(nz, cols, present, v)


@njit(cache=True)
def _sddmm_compress(q, kmat, scale, group_size, tile_rows, tile_cols, keep):
    n = q.shape[0]
    m = kmat.shape[0]
    kdim = q.shape[1]
    nonzeros = np.zeros((n, m // 2))
    meta = np.zeros((n, m // group_size), dtype=np.uint8)
    tile = np.empty((tile_rows, tile_cols))
    peak = 0
    nnz_written = 0
    nib_written = 0
    for ti in range(keep.shape[0]):
        i0 = ti * tile_rows
        ih = min(i0 + tile_rows, n) - i0
        for tj in range(keep.shape[1]):
            if not keep[ti, tj]:
                continue
            j0 = tj * tile_cols
            jw = min(j0 + tile_cols, m) - j0
            if ih * jw > peak:
                peak = ih * jw
            # score tile, accumulated ascending in k exactly like the GEMM
            for a in range(ih):
                for b in range(jw):
                    tile[a, b] = 0.0
            for k in range(kdim):
                for a in range(ih):
                    qv = q[i0 + a, k]
                    for b in range(jw):
                        tile[a, b] += qv * kmat[j0 + b, k]
            for a in range(ih):
                for b in range(jw):
                    tile[a, b] = tile[a, b] * scale
            # prune-and-encode epilogue: nonzeros and nibbles leave the tile,
            # dense scores never do
            if group_size == 2:
                g0 = j0 // 2
                for a in range(ih):
                    r = i0 + a
                    for g in range(jw // 2):
                        b = 2 * g
                        if tile[a, b + 1] > tile[a, b]:
                            nonzeros[r, g0 + g] = tile[a, b + 1]
                            meta[r, g0 + g] = 0xE
                        else:
                            nonzeros[r, g0 + g] = tile[a, b]
                            meta[r, g0 + g] = 0x4
                        nnz_written += 1
                        nib_written += 1
            else:
                g0 = j0 // 4
                for a in range(ih):
                    r = i0 + a
                    for g in range(jw // 4):
                        b = 4 * g
                        best = 0
                        for t in range(1, 4):
                            if tile[a, b + t] > tile[a, b + best]:
                                best = t
                        second = -1
                        for t in range(4):
                            if t == best:
                                continue
                            if second < 0 or tile[a, b + t] > tile[a, b + second]:
                                second = t
                        if best < second:
                            lo, hi = best, second
                        else:
                            lo, hi = second, best
                        gg = g0 + g
                        nonzeros[r, 2 * gg] = tile[a, b + lo]
                        nonzeros[r, 2 * gg + 1] = tile[a, b + hi]
                        meta[r, gg] = lo | (hi << 2)
                        nnz_written += 2
                        nib_written += 1
    return nonzeros, meta, peak, nnz_written, nib_written


def sddmm_compress(q, kmat, scale, group_size, tile_rows, tile_cols, keep):
    return _sddmm_compress(q, kmat, scale, group_size, tile_rows, tile_cols, keep)
