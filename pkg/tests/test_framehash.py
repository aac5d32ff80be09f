import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from hvhash.framehash import (FrameHash, HashConfigError, block_differences, hash_distance, hash_frame,
                              hash_frames, popcount64)
from hvhash.media import PreprocessedFrame

from oracles import mean_hash_reference

frames64 = hnp.arrays(np.uint8, (64, 64))


def test_constant_frame_hashes_to_zero():
    h = hash_frame(PreprocessedFrame(np.full((64, 64), 100, np.uint8), 0))
    assert h.block_count == 64 and h.value == 0


def test_single_bright_block():
    img = np.zeros((64, 64), np.uint8)
    img[:8, :8] = 255
    bits = hash_frame(img).bits
    assert bits[0] == 1 and bits[1:].sum() == 0


def test_block_order_is_row_major():
    img = np.zeros((64, 64), np.uint8)
    img[8:16, 0:8] = 255  # second block row, first column
    assert hash_frame(img).bits.tolist().index(1) == 8


@settings(max_examples=60)
@given(frames64)
def test_matches_float_mean_oracle(img):
    assert hash_frame(img).bits.tolist() == mean_hash_reference(img, 8)


def test_random_frames_match_oracle(nprng):
    for _ in range(20):
        img = nprng.integers(0, 256, (64, 64), dtype=np.uint8)
        assert hash_frame(img).bits.tolist() == mean_hash_reference(img, 8)


@pytest.mark.parametrize("grid,res", [(4, 32), (2, 16), (16, 64)])
def test_other_grids_match_oracle(nprng, grid, res):
    img = nprng.integers(0, 256, (res, res), dtype=np.uint8)
    h = hash_frame(img, grid)
    assert h.block_count == grid * grid
    assert h.bits.tolist() == mean_hash_reference(img, grid)


def test_packed_batch_equals_single(nprng):
    stack = nprng.integers(0, 256, (6, 64, 64), dtype=np.uint8)
    packed = hash_frames(stack)
    assert [int(v) for v in packed] == [hash_frame(f).value for f in stack]


def test_differences_sum_to_zero(nprng):
    d = block_differences(nprng.integers(0, 256, (64, 64), dtype=np.uint8))
    assert d.sum() == 0


@settings(max_examples=40)
@given(frames64, st.integers(1, 7), st.integers(0, 1000))
def test_affine_intensity_invariance(img, scale, offset):
    base = hash_frame(img)
    assert hash_frame(img.astype(np.int64) * scale) == base
    assert hash_frame(img.astype(np.int64) + offset) == base


def test_grid_mismatch():
    with pytest.raises(HashConfigError):
        hash_frame(np.zeros((60, 60), np.uint8), 8)


def test_distance_examples():
    a = FrameHash.from_bits([0, 0, 1, 1])
    b = FrameHash.from_bits([0, 1, 0, 1])
    assert hash_distance(a, b) == 2
    assert hash_distance(a, a) == 0
    assert hash_distance(FrameHash(0, 64), FrameHash(2**64 - 1, 64)) == 64
    with pytest.raises(HashConfigError):
        hash_distance(a, FrameHash(0, 64))


hashes = st.integers(0, 2**64 - 1).map(lambda v: FrameHash(v, 64))


@given(hashes, hashes, hashes)
def test_distance_is_a_metric(a, b, c):
    assert hash_distance(a, b) == hash_distance(b, a)
    assert (hash_distance(a, b) == 0) == (a == b)
    assert hash_distance(a, c) <= hash_distance(a, b) + hash_distance(b, c)


@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=20))
def test_vector_popcount(values):
    assert popcount64(np.array(values, dtype=np.uint64)).tolist() == [bin(v).count("1") for v in values]


def test_bits_round_trip():
    h = FrameHash.from_bits([1, 0, 1, 1, 0])
    assert h.value == 0b01101 and str(h) == "10110"
    with pytest.raises(HashConfigError):
        FrameHash(32, 5)
