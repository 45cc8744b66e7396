import numpy as np
import pytest

from nmattn import (
    BlockMask,
    DenseMatrix,
    SparsityMode,
    compress_logical,
    from_bytes,
    read_container,
    tile_layout_encode,
    to_bytes,
    write_container,
)
from nmattn.codec import CompressedSparse
from nmattn.container import pack_nibbles, unpack_nibbles


def small_container(rng, mode=SparsityMode.TWO_OF_FOUR, rows=4, cols=16):
    m = DenseMatrix(rng.standard_normal((rows, cols)))
    return compress_logical(m, mode)


def test_header_golden_bytes():
    c = CompressedSparse(
        1, 4, SparsityMode.TWO_OF_FOUR, np.array([[1.0, 2.0]]),
        np.array([0x8], dtype=np.uint8),
    )
    raw = to_bytes(c)
    assert raw[:4] == b"NMCS"
    assert raw[4] == 1  # version
    assert raw[5] == 2  # mode code for 2:4
    assert raw[6] == 0  # logical layout
    assert int.from_bytes(raw[7:11], "little") == 1
    assert int.from_bytes(raw[11:15], "little") == 4
    assert raw[15:23] == np.float64(1.0).tobytes()
    assert raw[-1] == 0x08  # lone nibble in the low half, zero pad above
    assert len(raw) == 15 + 16 + 1


def test_roundtrip_both_layouts(rng):
    for mode in SparsityMode:
        c = small_container(rng, mode, rows=32, cols=64)
        for variant in (c, tile_layout_encode(c)):
            back = from_bytes(to_bytes(variant))
            assert back.mode is variant.mode
            assert back.layout is variant.layout
            assert np.array_equal(back.nonzeros, variant.nonzeros)
            assert np.array_equal(back.metadata, variant.metadata)


def test_file_roundtrip(tmp_path, rng):
    c = small_container(rng)
    path = tmp_path / "scores.nmcs"
    n = write_container(c, path)
    assert path.stat().st_size == n
    back = read_container(path)
    assert np.array_equal(back.nonzeros, c.nonzeros)


def test_nibble_packing_order():
    packed = pack_nibbles(np.array([0x4, 0xE, 0x8], dtype=np.uint8))
    assert packed == bytes([0xE4, 0x08])
    assert unpack_nibbles(packed, 3).tolist() == [0x4, 0xE, 0x8]
    with pytest.raises(ValueError, match="padding"):
        unpack_nibbles(bytes([0xE4, 0x58]), 3)


def test_reject_bad_magic(rng):
    raw = bytearray(to_bytes(small_container(rng)))
    raw[:4] = b"XXXX"
    with pytest.raises(ValueError, match="magic"):
        from_bytes(bytes(raw))


def test_reject_bad_version_and_codes(rng):
    base = to_bytes(small_container(rng))
    for offset, message in ((4, "version"), (5, "mode"), (6, "layout")):
        raw = bytearray(base)
        raw[offset] = 9
        with pytest.raises(ValueError, match=message):
            from_bytes(bytes(raw))


def test_reject_truncated_and_padded(rng):
    base = to_bytes(small_container(rng))
    with pytest.raises(ValueError, match="size|truncated"):
        from_bytes(base[:-1])
    with pytest.raises(ValueError, match="size"):
        from_bytes(base + b"\x00")
    with pytest.raises(ValueError, match="truncated"):
        from_bytes(base[:8])


def test_reject_malformed_nibble(rng):
    c = small_container(rng, rows=2, cols=16)
    raw = bytearray(to_bytes(c))
    raw[-1] = 0x55  # nibble 0x5 decodes to the non-increasing pair (1, 1)
    with pytest.raises(ValueError, match="malformed nibble"):
        from_bytes(bytes(raw))


def test_reject_non_finite_nonzeros(rng):
    c = small_container(rng, rows=1, cols=4)
    raw = bytearray(to_bytes(c))
    raw[15:23] = np.float64("nan").tobytes()
    with pytest.raises(ValueError, match="NaN|Inf"):
        from_bytes(bytes(raw))


def test_reject_block_masked(rng):
    q = DenseMatrix(rng.standard_normal((32, 8)))
    from nmattn.fused import sddmm_prune

    mask = BlockMask(np.array([[True]]), tile_rows=32, tile_cols=64)
    c, _ = sddmm_prune(q, q, SparsityMode.ONE_OF_TWO, 1.0, mask)
    with pytest.raises(ValueError, match="mask"):
        to_bytes(c)
