"""Video hash assembly, the ``HVH1`` binary format and an on-disk hash index.

Hash file layout (all integers little-endian)::

    offset  size  field
    0       4     magic "HVH1"
    4       2     format_version (u16, currently 1)
    6       2     resolution F (u16)
    8       2     block grid B (u16)
    10      4     total_frames (u32)
    14      4     blank_count (u32)
    18      4     trailing_drops (u32)
    22      8     frame_rate (f64)
    30      8     keyframe_percentage (f64)
    38      2     source_id length L (u16)
    40      L     source_id (UTF-8)
    40+L    4     record count R (u32)
    44+L    R*W   records, W = ceil(B*B/8) + 6:
                    ceil(B*B/8) bytes hash bits (bit k = block k, LE),
                    u16 dropped_before (saturating at 65535),
                    u32 source_index

Index file layout::

    "HVX1" u16 version
    entries: u32 length, then one hash file of that length
    trailer: u32 entry count, count x u64 entry offsets,
             u64 trailer offset, "HVXT"
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .framehash import FrameHash, hash_frames, hash_frame
from .keyframes import KeyframeRecord, SelectionParams, SelectionResult, scan, scan_packed
from .matcher import MatchParams, MatchResult, compare, similarity
from .media import VideoStream, equalize_histogram, frame_std, resize_bilinear

MAGIC = b"HVH1"
FORMAT_VERSION = 1
INDEX_MAGIC = b"HVX1"
INDEX_TRAILER_MAGIC = b"HVXT"
INDEX_VERSION = 1

_HEAD = struct.Struct("<4sHHHIIIdd")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class HashFormatError(ValueError):
    pass


@dataclass(frozen=True)
class VideoHashHeader:
    source_id: str
    total_frames: int
    frame_rate: float
    blank_count: int
    trailing_drops: int
    keyframe_percentage: float
    resolution: int
    block_grid: int
    format_version: int = FORMAT_VERSION

    @property
    def block_count(self) -> int:
        return self.block_grid * self.block_grid


@dataclass(frozen=True)
class VideoHash:
    header: VideoHashHeader
    records: tuple[KeyframeRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def source_id(self) -> str:
        return self.header.source_id

    def frame_count_identity(self) -> bool:
        h = self.header
        return h.total_frames == (h.blank_count + len(self.records)
                                  + sum(r.dropped_before for r in self.records) + h.trailing_drops)


def assemble(source_id: str, frame_rate: float, total_frames: int, selection: SelectionResult,
             params: SelectionParams) -> VideoHash:
    content = total_frames - selection.blank_count
    pct = 100.0 * len(selection.records) / content if content else 0.0
    header = VideoHashHeader(source_id=source_id, total_frames=total_frames, frame_rate=float(frame_rate),
                             blank_count=selection.blank_count, trailing_drops=selection.trailing_drops,
                             keyframe_percentage=pct, resolution=params.resolution,
                             block_grid=params.block_grid)
    return VideoHash(header, tuple(selection.records))


@dataclass
class PlainAnalysis:
    """Per-frame intermediate values of the plaintext pipeline."""

    preprocessed: np.ndarray  # (T, F, F) uint8
    blank: np.ndarray  # (T,) bool
    selection: SelectionResult


def analyse(stream: VideoStream, params: SelectionParams = SelectionParams()) -> PlainAnalysis:
    """Pre-process every frame, flag blanks and run keyframe selection."""
    resized = resize_bilinear(stream.pixels, params.resolution, params.resolution)
    blank = frame_std(resized) < params.blank_std_threshold
    pre = equalize_histogram(resized)
    k = params.block_count
    if k <= 64:
        packed = hash_frames(pre, params.block_grid)
        keep, drops, n_blank, trailing = scan_packed(packed, blank, params.keyframe_distance_threshold)
        selection = SelectionResult(
            [KeyframeRecord(FrameHash(int(packed[i]), k), d, i) for i, d in zip(keep, drops)],
            n_blank, trailing)
    else:
        hashes = [hash_frame(p, params.block_grid) for p in pre]
        selection = scan(hashes, blank.tolist(), params.keyframe_distance_threshold)
    return PlainAnalysis(pre, blank, selection)


def build_video_hash(stream: VideoStream, params: SelectionParams = SelectionParams()) -> VideoHash:
    """Pre-process, drop blanks, select keyframes and assemble the hash."""
    analysis = analyse(stream, params)
    return assemble(stream.source_id, stream.frame_rate, len(stream), analysis.selection, params)


# -- binary format -----------------------------------------------------------

def _hash_width(block_count: int) -> int:
    return (block_count + 7) // 8


def serialize(h: VideoHash) -> bytes:
    hd = h.header
    sid = hd.source_id.encode("utf-8")
    if len(sid) > 0xFFFF:
        raise HashFormatError("source_id longer than 65535 bytes")
    width = _hash_width(hd.block_count)
    parts = [_HEAD.pack(MAGIC, hd.format_version, hd.resolution, hd.block_grid, hd.total_frames,
                        hd.blank_count, hd.trailing_drops, hd.frame_rate, hd.keyframe_percentage),
             _U16.pack(len(sid)), sid, _U32.pack(len(h.records))]
    for r in h.records:
        parts.append(r.hash.value.to_bytes(width, "little"))
        parts.append(struct.pack("<HI", min(r.dropped_before, 0xFFFF), r.source_index))
    return b"".join(parts)


def _take(data: bytes, pos: int, size: int, what: str) -> int:
    if pos + size > len(data):
        raise HashFormatError(f"truncated {what} at byte {pos}: need {size}, have {len(data) - pos}")
    return pos + size


def deserialize(data: bytes) -> VideoHash:
    data = bytes(data)
    _take(data, 0, _HEAD.size, "header")
    magic, version, res, grid, total, blanks, trailing, rate, pct = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise HashFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise HashFormatError(f"unsupported format version {version}")
    pos = _take(data, _HEAD.size, 2, "source_id length")
    (sid_len,) = _U16.unpack_from(data, _HEAD.size)
    end = _take(data, pos, sid_len, "source_id")
    try:
        sid = data[pos:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise HashFormatError(f"source_id is not UTF-8: {exc}") from None
    pos = _take(data, end, 4, "record count")
    (count,) = _U32.unpack_from(data, end)
    k = grid * grid
    width = _hash_width(k)
    stride = width + 6
    _take(data, pos, count * stride, "record array")
    records = []
    for _ in range(count):
        value = int.from_bytes(data[pos:pos + width], "little")
        dropped, index = struct.unpack_from("<HI", data, pos + width)
        try:
            records.append(KeyframeRecord(FrameHash(value, k), dropped, index))
        except ValueError as exc:
            raise HashFormatError(str(exc)) from None
        pos += stride
    if pos != len(data):
        raise HashFormatError(f"{len(data) - pos} trailing bytes after record array")
    header = VideoHashHeader(sid, total, rate, blanks, trailing, pct, res, grid, version)
    return VideoHash(header, tuple(records))


def save(h: VideoHash, path: str | Path) -> None:
    Path(path).write_bytes(serialize(h))


def load(path: str | Path) -> VideoHash:
    return deserialize(Path(path).read_bytes())


# -- index -------------------------------------------------------------------

class DuplicateEntryError(ValueError):
    pass


@dataclass
class HashIndex:
    """Append-only collection of video hashes keyed by ``source_id``.

    With a ``storage_path`` every :meth:`add` is appended to the file. One
    writer at a time; readers may share the loaded object.
    """

    storage_path: Path | None = None
    entries: dict[str, VideoHash] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, source_id: str) -> bool:
        return source_id in self.entries

    @classmethod
    def open(cls, path: str | Path) -> "HashIndex":
        path = Path(path)
        idx = cls(path)
        if path.exists():
            for h in _read_index(path.read_bytes()):
                idx.entries[h.source_id] = h
        return idx

    def add(self, h: VideoHash) -> "HashIndex":
        if h.source_id in self.entries:
            raise DuplicateEntryError(f"duplicate source_id {h.source_id!r}")
        if self.storage_path is not None:
            _append_index(self.storage_path, serialize(h))
        self.entries[h.source_id] = h
        return self

    def query(self, query: VideoHash, threshold: float = 0, params: MatchParams = MatchParams(),
              by: str = "score") -> list[tuple[str, MatchResult]]:
        return index_query(self, query, threshold, params, by)


def index_add(idx: HashIndex, h: VideoHash) -> HashIndex:
    return idx.add(h)


def index_query(idx: HashIndex, query: VideoHash, threshold: float = 0,
                params: MatchParams = MatchParams(), by: str = "score") -> list[tuple[str, MatchResult]]:
    """Entries whose score (or similarity, with ``by="similarity"``) reaches
    ``threshold``, best first, ties by ``source_id``."""
    if by not in ("score", "similarity"):
        raise ValueError("by must be 'score' or 'similarity'")
    key = (lambda r: r.score) if by == "score" else similarity
    hits = []
    for sid, h in idx.entries.items():
        result = compare(query, h, params)
        if key(result) >= threshold:
            hits.append((sid, result))
    hits.sort(key=lambda item: (-key(item[1]), item[0]))
    return hits


def _index_trailer(offsets: list[int], trailer_at: int) -> bytes:
    return (_U32.pack(len(offsets)) + b"".join(_U64.pack(o) for o in offsets)
            + _U64.pack(trailer_at) + INDEX_TRAILER_MAGIC)


def _read_trailer(data: bytes) -> tuple[list[int], int]:
    if len(data) < 6 + 4 + 12 or data[:4] != INDEX_MAGIC:
        raise HashFormatError("not an HVX1 index file")
    (version,) = _U16.unpack_from(data, 4)
    if version != INDEX_VERSION:
        raise HashFormatError(f"unsupported index version {version}")
    if data[-4:] != INDEX_TRAILER_MAGIC:
        raise HashFormatError("index trailer missing; file truncated?")
    (trailer_at,) = _U64.unpack_from(data, len(data) - 12)
    _take(data, trailer_at, 4, "index trailer")
    (count,) = _U32.unpack_from(data, trailer_at)
    if trailer_at + 4 + 8 * count + 12 != len(data):
        raise HashFormatError("index trailer size mismatch")
    offsets = [_U64.unpack_from(data, trailer_at + 4 + 8 * i)[0] for i in range(count)]
    return offsets, trailer_at


def _read_index(data: bytes) -> Iterable[VideoHash]:
    offsets, _ = _read_trailer(data)
    for off in offsets:
        _take(data, off, 4, "entry length")
        (size,) = _U32.unpack_from(data, off)
        _take(data, off + 4, size, "entry")
        yield deserialize(data[off + 4:off + 4 + size])


def _append_index(path: Path, blob: bytes) -> None:
    if not path.exists() or path.stat().st_size == 0:
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC + _U16.pack(INDEX_VERSION) + _index_trailer([], 6))
    with open(path, "r+b") as fh:
        data = fh.read()
        offsets, trailer_at = _read_trailer(data)
        fh.seek(trailer_at)
        fh.write(_U32.pack(len(blob)) + blob)
        offsets.append(trailer_at)
        fh.write(_index_trailer(offsets, trailer_at + 4 + len(blob)))
        fh.truncate()
        fh.flush()
        os.fsync(fh.fileno())
