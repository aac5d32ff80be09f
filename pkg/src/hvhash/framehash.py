"""Block-sum sign hash of a pre-processed frame.

Bit ``k`` is set when ``K * S_k - S > 0``, where ``S_k`` is the pixel sum of
block ``k`` (row-major over a ``B x B`` grid), ``S`` the sum over the frame and
``K = B * B``. Only additions and integer scalar multiples are involved, so the
same quantities can be formed over Paillier ciphertexts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_GRID = 8


class HashConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrameHash:
    """``K`` hash bits packed into an int; bit ``k`` is ``(value >> k) & 1``."""

    value: int
    block_count: int

    def __post_init__(self):
        if self.value < 0 or self.value >> self.block_count:
            raise HashConfigError("hash value does not fit in block_count bits")

    @property
    def bits(self) -> np.ndarray:
        return np.array([(self.value >> k) & 1 for k in range(self.block_count)], dtype=np.uint8)

    @classmethod
    def from_bits(cls, bits) -> "FrameHash":
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        if bits.size and bits.max() > 1:
            raise HashConfigError("hash bits must be 0 or 1")
        return cls(_pack(bits), bits.size)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def _pack(bits: np.ndarray) -> int:
    weights = [1 << k for k in range(bits.size)]
    return sum(w for w, b in zip(weights, bits.tolist()) if b)


def check_grid(resolution: int, block_grid: int) -> None:
    if block_grid < 1 or resolution < 1 or resolution % block_grid:
        raise HashConfigError(f"resolution {resolution} is not divisible by block grid {block_grid}")


def block_sums(pixels: np.ndarray, block_grid: int = DEFAULT_BLOCK_GRID) -> np.ndarray:
    """Per-block pixel sums, shape ``(..., B*B)``, row-major block order."""
    f = pixels.shape[-1]
    if pixels.shape[-2] != f:
        raise HashConfigError("frames must be square")
    check_grid(f, block_grid)
    side = f // block_grid
    blocks = pixels.astype(np.int64).reshape(*pixels.shape[:-2], block_grid, side, block_grid, side)
    return blocks.sum(axis=(-3, -1)).reshape(*pixels.shape[:-2], block_grid * block_grid)


def block_differences(pixels: np.ndarray, block_grid: int = DEFAULT_BLOCK_GRID) -> np.ndarray:
    """The integers ``K * S_k - S`` for every block."""
    sums = block_sums(pixels, block_grid)
    k = block_grid * block_grid
    return k * sums - sums.sum(axis=-1, keepdims=True)


def bits_from_differences(diffs) -> FrameHash:
    """Sign bits with ties going to 0."""
    return FrameHash.from_bits(np.asarray(diffs) > 0)


def hash_frame(frame, block_grid: int = DEFAULT_BLOCK_GRID) -> FrameHash:
    pixels = getattr(frame, "pixels", frame)
    return bits_from_differences(block_differences(pixels, block_grid))


def hash_frames(pixels: np.ndarray, block_grid: int = DEFAULT_BLOCK_GRID) -> np.ndarray:
    """Hash a ``(T, F, F)`` stack; returns packed ``uint64`` values (K <= 64)."""
    k = block_grid * block_grid
    if k > 64:
        raise HashConfigError("packed hashing supports at most 64 blocks")
    bits = (block_differences(pixels, block_grid) > 0).astype(np.uint64)
    return (bits << np.arange(k, dtype=np.uint64)).sum(axis=-1, dtype=np.uint64)


def hash_distance(a: FrameHash, b: FrameHash) -> int:
    """Hamming (L1) distance between two hashes of the same length."""
    if a.block_count != b.block_count:
        raise HashConfigError(f"hash lengths differ: {a.block_count} vs {b.block_count}")
    return (a.value ^ b.value).bit_count()


def popcount64(x: np.ndarray) -> np.ndarray:
    """Vectorised popcount of a uint64 array."""
    x = x.astype(np.uint64)
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((x * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)
