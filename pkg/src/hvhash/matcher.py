"""Modified longest-common-substring matching of variable-length video hashes.

Two keyframe records match when their hashes are within ``hash_threshold``
bits and their drop counts within ``drop_threshold`` frames. A run of
matching records along a diagonal accumulates ``1 + avg(dropped_before)``
per pair; the score is the best run total.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .framehash import popcount64


class MatchError(ValueError):
    pass


ROUNDING_RULES = ("half_up", "floor")


@dataclass(frozen=True)
class MatchParams:
    hash_threshold: int = 8
    drop_threshold: int = 5
    drop_rounding: str = "half_up"

    def __post_init__(self):
        if self.hash_threshold < 0 or self.drop_threshold < 0:
            raise ValueError("thresholds must be non-negative")
        if self.drop_rounding not in ROUNDING_RULES:
            raise ValueError(f"drop_rounding must be one of {ROUNDING_RULES}")


@dataclass(frozen=True)
class MatchResult:
    score: int
    alignment: tuple[tuple[int, int], ...]
    self_score_a: int
    self_score_b: int

    @property
    def similarity(self) -> float:
        return similarity(self)


def self_score(drops) -> int:
    """Score of a hash against itself: one per record plus its drop count."""
    return int(sum(1 + int(d) for d in drops))


def similarity(result: MatchResult) -> float:
    """``score / min(self scores)``, clipped to 1; 0 if either self score is 0.

    The clip matters only when a pair's averaged drop count exceeds the
    smaller video's own count, which can push the raw ratio past 1.
    """
    denom = min(result.self_score_a, result.self_score_b)
    if denom <= 0:
        return 0.0
    return min(1.0, result.score / denom)


def _distance_matrix(ha, hb) -> np.ndarray:
    ha = list(ha)
    hb = list(hb)
    if all(0 <= v < 1 << 64 for v in ha + hb):
        x = np.array(ha, dtype=np.uint64)[:, None] ^ np.array(hb, dtype=np.uint64)[None, :]
        return popcount64(x)
    return np.array([[(x ^ y).bit_count() for y in hb] for x in ha], dtype=np.int64).reshape(len(ha), len(hb))


def increment_matrix(da: np.ndarray, db: np.ndarray, rule: str = "half_up") -> np.ndarray:
    total = da[:, None] + db[None, :]
    avg = (total + 1) // 2 if rule == "half_up" else total // 2
    return 1 + avg


def match_matrix(ha, da, hb, db, params: MatchParams) -> np.ndarray:
    dist = _distance_matrix(ha, hb)
    return (dist <= params.hash_threshold) & (np.abs(da[:, None] - db[None, :]) <= params.drop_threshold)


def compare_sequences(ha, da, hb, db, params: MatchParams = MatchParams()) -> MatchResult:
    """Core dynamic program over packed hash values and drop counts."""
    da = np.asarray(da, dtype=np.int64).reshape(-1)
    db = np.asarray(db, dtype=np.int64).reshape(-1)
    m, n = da.size, db.size
    sa, sb = self_score(da.tolist()), self_score(db.tolist())
    if m == 0 or n == 0:
        return MatchResult(0, (), sa, sb)
    match = match_matrix(ha, da, hb, db, params)
    inc = np.where(match, increment_matrix(da, db, params.drop_rounding), 0)

    value = np.zeros((m, n), dtype=np.int64)
    length = np.zeros((m, n), dtype=np.int64)
    value[0] = inc[0]
    length[0] = match[0]
    for i in range(1, m):
        value[i, 0] = inc[i, 0]
        length[i, 0] = match[i, 0]
        row = match[i, 1:]
        value[i, 1:] = np.where(row, value[i - 1, :-1] + inc[i, 1:], 0)
        length[i, 1:] = np.where(row, length[i - 1, :-1] + 1, 0)

    best = int(value.max())
    if best == 0:
        return MatchResult(0, (), sa, sb)
    ii, jj = np.nonzero(value == best)
    runs = length[ii, jj]
    start_a, start_b = ii - runs + 1, jj - runs + 1
    pick = np.lexsort((start_b, start_a))[0]
    a0, b0, run = int(start_a[pick]), int(start_b[pick]), int(runs[pick])
    return MatchResult(best, tuple((a0 + t, b0 + t) for t in range(run)), sa, sb)


def compare(a, b, params: MatchParams = MatchParams()) -> MatchResult:
    """Compare two :class:`~hvhash.videohash.VideoHash` values."""
    if (a.header.resolution, a.header.block_grid) != (b.header.resolution, b.header.block_grid):
        raise MatchError("hashes were built with different resolution or block grid")
    return compare_sequences([r.hash.value for r in a.records], [r.dropped_before for r in a.records],
                             [r.hash.value for r in b.records], [r.dropped_before for r in b.records],
                             params)
