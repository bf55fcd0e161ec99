"""64-bit block-mean perceptual hash and Hamming-distance change detection.

The hash is computed on the normalized (post-canvas) image so that reuse
decisions are resolution independent: luminance, exact area resize to
256x256, an 8x8 grid of 32x32 blocks, and one bit per block — set iff the
block mean is strictly above the median of the 64 block means (ties give 0,
so a uniform image hashes to 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .imaging import NormalizedImage, luminance_u8

HASH_BITS = 64
_GRID = 8
_RESIZE = 256

SIGNIFICANT_CHANGE_THRESHOLD = 5  # Hamming distance at/above which a page "changed"


@dataclass(frozen=True)
class PerceptualHash:
    bits: int  # 64-bit value, block (0,0) in the most significant bit
    source_dims: tuple[int, int]  # (w, h) of the hashed image

    def to_hex(self) -> str:
        return format(self.bits & 0xFFFFFFFFFFFFFFFF, "016x")

    @classmethod
    def from_hex(cls, s: str, source_dims: tuple[int, int] = (0, 0)) -> "PerceptualHash":
        if len(s) != 16:
            raise ValueError("hash serialization is 16 hex characters")
        return cls(bits=int(s, 16), source_dims=source_dims)


@dataclass(frozen=True)
class HashDistance:
    value: int

    def __post_init__(self):
        if not 0 <= self.value <= HASH_BITS:
            raise ValueError("hamming distance out of range")


def block_sums(img: NormalizedImage) -> np.ndarray:
    """Integer 8x8 grid of block pixel sums (same ordering as block means)."""
    lum = luminance_u8(img.pixels)
    small = _accel.resize_area_u8(lum, _RESIZE, _RESIZE)
    side = _RESIZE // _GRID
    return (
        small.astype(np.int64)
        .reshape(_GRID, side, _GRID, side)
        .sum(axis=(1, 3))
    )


def compute_phash(img: NormalizedImage) -> PerceptualHash:
    """Block-mean hash: bit = 1 iff block mean > median of the 64 means."""
    sums = block_sums(img).ravel()
    ordered = np.sort(sums)
    median2 = int(ordered[31] + ordered[32])  # 2x the median, stays integral
    bits = 0
    for k in range(HASH_BITS):
        if 2 * int(sums[k]) > median2:
            bits |= 1 << (HASH_BITS - 1 - k)
    return PerceptualHash(bits=bits, source_dims=(img.width, img.height))


def hamming_distance(a: PerceptualHash, b: PerceptualHash) -> HashDistance:
    return HashDistance(value=(a.bits ^ b.bits).bit_count())


def is_significant_change(d: HashDistance, threshold: int = SIGNIFICANT_CHANGE_THRESHOLD) -> bool:
    """True iff the page changed enough that the last verdict must not be reused."""
    return d.value >= threshold
