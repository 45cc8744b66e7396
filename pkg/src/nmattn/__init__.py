"""Dynamic N:M fine-grained structured sparse attention.

Scores are pruned to 1:2 or 2:4 patterns as an epilogue of the score
multiply, compressed to nonzeros plus nibble metadata, softmaxed over the
surviving entries, and multiplied against V in compressed form. The
``theory`` module carries the matching analytical quality, speedup, and
MSE models.
"""

from .backend import active_backend, set_backend
from .codec import (
    BlockMask,
    CompressedSparse,
    GroupSelection,
    Layout,
    PruneMask,
    SparsityMode,
    compress_logical,
    compressed_payload_bits,
    decompress,
    dense_payload_bits,
    interleaved_row,
    kept_elements,
    nibble_for_slots,
    nonzero_columns,
    prune_dense,
    select_group,
    slots_for_nibble,
    tile_layout_decode,
    tile_layout_encode,
)
from .container import from_bytes, read_container, to_bytes, write_container
from .dense import (
    AttentionInputs,
    DenseMatrix,
    attention_scores,
    dense_attention_weights,
    full_attention,
    gemm_scaled,
)
from .fused import FusedStats, attention_sddmm, sddmm_prune
from .pipeline import (
    ApproxError,
    AttentionWeights,
    approx_error,
    attention_heatmap,
    nm_attention,
)
from .sparse_ops import softmax_rows, spmm

__version__ = "0.1.0"

__all__ = [
    "ApproxError",
    "AttentionInputs",
    "AttentionWeights",
    "BlockMask",
    "CompressedSparse",
    "DenseMatrix",
    "FusedStats",
    "GroupSelection",
    "Layout",
    "PruneMask",
    "SparsityMode",
    "active_backend",
    "approx_error",
    "attention_heatmap",
    "attention_scores",
    "attention_sddmm",
    "compress_logical",
    "compressed_payload_bits",
    "decompress",
    "dense_attention_weights",
    "dense_payload_bits",
    "from_bytes",
    "full_attention",
    "gemm_scaled",
    "interleaved_row",
    "kept_elements",
    "nibble_for_slots",
    "nm_attention",
    "nonzero_columns",
    "prune_dense",
    "read_container",
    "sddmm_prune",
    "select_group",
    "set_backend",
    "slots_for_nibble",
    "softmax_rows",
    "spmm",
    "tile_layout_decode",
    "tile_layout_encode",
    "to_bytes",
    "write_container",
]
