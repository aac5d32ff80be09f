"""Blank-frame removal and keyframe selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .framehash import DEFAULT_BLOCK_GRID, FrameHash, check_grid, hash_distance, hash_frame
from .media import DEFAULT_RESOLUTION, PreprocessedFrame, frame_std


@dataclass(frozen=True)
class SelectionParams:
    blank_std_threshold: float = 4.0
    keyframe_distance_threshold: int = 16
    resolution: int = DEFAULT_RESOLUTION
    block_grid: int = DEFAULT_BLOCK_GRID

    def __post_init__(self):
        check_grid(self.resolution, self.block_grid)
        if not 1 <= self.keyframe_distance_threshold <= self.block_count:
            raise ValueError(f"keyframe_distance_threshold must lie in [1, {self.block_count}]")
        if self.blank_std_threshold < 0:
            raise ValueError("blank_std_threshold must be non-negative")

    @property
    def block_count(self) -> int:
        return self.block_grid * self.block_grid


@dataclass(frozen=True)
class KeyframeRecord:
    hash: FrameHash
    dropped_before: int
    source_index: int


@dataclass
class SelectionResult:
    records: list[KeyframeRecord] = field(default_factory=list)
    blank_count: int = 0
    trailing_drops: int = 0

    @property
    def content_frames(self) -> int:
        return len(self.records) + sum(r.dropped_before for r in self.records) + self.trailing_drops


def is_blank(frame, params: SelectionParams = SelectionParams()) -> bool:
    """True iff the pixel standard deviation is strictly below the threshold.

    A :class:`PreprocessedFrame` is judged on its pre-equalization spread
    when it carries one.
    """
    std = getattr(frame, "luma_std", None)
    if std is None:
        std = frame_std(getattr(frame, "pixels", frame))
    return bool(std < params.blank_std_threshold)


def scan(hashes: Sequence[FrameHash], blank: Sequence[bool], threshold: int,
         source_indices: Sequence[int] | None = None) -> SelectionResult:
    """Keyframe scan over precomputed hashes and blank flags.

    A non-blank frame becomes a keyframe when its distance to the previous
    keyframe exceeds ``threshold``; otherwise it adds to the pending drop
    counter, which the next keyframe records as ``dropped_before``.
    """
    if source_indices is None:
        source_indices = range(len(hashes))
    result = SelectionResult()
    last = None
    pending = 0
    for h, b, idx in zip(hashes, blank, source_indices):
        if b:
            result.blank_count += 1
            continue
        if last is None or hash_distance(h, last) > threshold:
            result.records.append(KeyframeRecord(h, pending, int(idx)))
            last = h
            pending = 0
        else:
            pending += 1
    result.trailing_drops = pending
    return result


def select_keyframes(frames: Sequence[PreprocessedFrame],
                     params: SelectionParams = SelectionParams()) -> SelectionResult:
    hashes = [hash_frame(f, params.block_grid) for f in frames]
    blank = [is_blank(f, params) for f in frames]
    return scan(hashes, blank, params.keyframe_distance_threshold, [f.source_index for f in frames])


def scan_packed(values: np.ndarray, blank: np.ndarray, threshold: int) -> tuple[list[int], list[int], int, int]:
    """:func:`scan` over packed uint64 hashes.

    Returns keyframe positions, their drop counts, the blank count and the
    trailing drops.
    """
    keep, drops = [], []
    last = None
    pending = 0
    for i, (v, b) in enumerate(zip(values.tolist(), blank.tolist())):
        if b:
            continue
        if last is None or (v ^ last).bit_count() > threshold:
            keep.append(i)
            drops.append(pending)
            last = v
            pending = 0
        else:
            pending += 1
    return keep, drops, int(np.count_nonzero(blank)), pending
