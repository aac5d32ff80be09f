"""Hash extraction over Paillier-encrypted frames.

Two roles exchange exactly one message each way:

* :class:`TrustedZone` holds the private key. ``prepare`` pre-processes the
  video, selects keyframes in the clear and encrypts every keyframe pixel.
  ``finalize`` decrypts the server's block components and keeps only their
  signs.
* :func:`server_aggregate` sees the public key and ciphertexts only. It forms
  ``E(K * S_k - S)`` for every block with ciphertext products and powers, then
  re-randomizes each component.

Transfer files (``HVE1`` trusted zone to server, ``HVC1`` back) are
documented in :func:`write_bundle` and :func:`write_components`.
"""
from __future__ import annotations

import json
import secrets
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import paillier
from .framehash import DEFAULT_BLOCK_GRID, FrameHash, check_grid
from .keyframes import KeyframeRecord, SelectionParams, SelectionResult
from .media import VideoStream
from .paillier import Ciphertext, KeyMismatchError, PaillierPublicKey, _powmod
from .videohash import VideoHash, analyse, assemble

BUNDLE_MAGIC = b"HVE1"
COMPONENTS_MAGIC = b"HVC1"
TRANSFER_VERSION = 1


class TransferFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EncryptedFrame:
    """Row-major ``F x F`` pixel ciphertexts (bare integers mod ``n**2``)."""

    ciphertexts: tuple[int, ...]
    resolution: int
    source_index: int
    key_fingerprint: bytes

    def __post_init__(self):
        if len(self.ciphertexts) != self.resolution * self.resolution:
            raise ValueError("an encrypted frame needs exactly F*F ciphertexts")

    def ciphertext(self, row: int, col: int, pk: PaillierPublicKey) -> Ciphertext:
        return Ciphertext(self.ciphertexts[row * self.resolution + col], pk.n)


@dataclass(frozen=True)
class EncryptedHashComponents:
    """``K`` ciphertexts; entry ``k`` encrypts ``K * S_k - S`` (signed)."""

    block_diffs: tuple[int, ...]
    source_index: int
    key_fingerprint: bytes
    rerandomized: bool = False


@dataclass(frozen=True)
class VideoMeta:
    """Plaintext side information that travels with the encrypted frames."""

    source_id: str
    total_frames: int
    frame_rate: float
    blank_count: int
    trailing_drops: int
    resolution: int
    block_grid: int
    dropped_before: tuple[int, ...] = ()
    source_indices: tuple[int, ...] = ()

    def to_json(self) -> bytes:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["dropped_before"] = list(self.dropped_before)
        doc["source_indices"] = list(self.source_indices)
        return json.dumps(doc, sort_keys=True).encode()

    @classmethod
    def from_json(cls, raw: bytes) -> "VideoMeta":
        doc = json.loads(raw)
        doc["dropped_before"] = tuple(doc["dropped_before"])
        doc["source_indices"] = tuple(doc["source_indices"])
        return cls(**doc)


@dataclass(frozen=True)
class EncryptedVideo:
    """Trusted zone to server message."""

    meta: VideoMeta
    frames: tuple[EncryptedFrame, ...]
    key_fingerprint: bytes


@dataclass(frozen=True)
class EncryptedComponentsVideo:
    """Server to trusted zone message."""

    meta: VideoMeta
    components: tuple[EncryptedHashComponents, ...]
    key_fingerprint: bytes


class TrustedZone:
    """Holder of the private key; no method hands the key out."""

    def __init__(self, private_key: paillier.PaillierPrivateKey,
                 params: SelectionParams | None = None, rng=None):
        self.__key = private_key
        self.__lock = threading.Lock()
        self.params = params or SelectionParams()
        self._rng = rng or secrets.SystemRandom()
        self.public_key = private_key.public_key

    def __repr__(self) -> str:
        return f"TrustedZone(key_bits={self.public_key.key_bits}, params={self.params})"

    def _check_key(self, fingerprint: bytes) -> None:
        if fingerprint != self.public_key.fingerprint():
            raise KeyMismatchError("data was produced under a different public key")

    def prepare(self, stream: VideoStream, pk: PaillierPublicKey | None = None) -> EncryptedVideo:
        """Select keyframes in the clear and encrypt their pre-processed pixels."""
        if pk is not None and pk.n != self.public_key.n:
            raise KeyMismatchError("public key does not belong to this trusted zone")
        pk = self.public_key
        analysis = analyse(stream, self.params)
        sel = analysis.selection
        fp = pk.fingerprint()
        frames = []
        for rec in sel.records:
            pixels = analysis.preprocessed[rec.source_index].ravel().tolist()
            frames.append(EncryptedFrame(tuple(paillier.encrypt_many(pixels, pk, self._rng)),
                                         self.params.resolution, rec.source_index, fp))
        meta = VideoMeta(stream.source_id, len(stream), float(stream.frame_rate), sel.blank_count,
                         sel.trailing_drops, self.params.resolution, self.params.block_grid,
                         tuple(r.dropped_before for r in sel.records),
                         tuple(r.source_index for r in sel.records))
        return EncryptedVideo(meta, tuple(frames), fp)

    def finalize_frame(self, components: EncryptedHashComponents) -> FrameHash:
        """Decrypt block components and release only their sign bits."""
        self._check_key(components.key_fingerprint)
        with self.__lock:
            values = [paillier.raw_decrypt(c, self.__key) for c in components.block_diffs]
        n = self.public_key.n
        return FrameHash.from_bits([paillier.decode_signed(v, n) > 0 for v in values])

    def finalize(self, message: EncryptedComponentsVideo) -> VideoHash:
        self._check_key(message.key_fingerprint)
        meta = message.meta
        if (meta.resolution, meta.block_grid) != (self.params.resolution, self.params.block_grid):
            raise ValueError("components were built with different resolution or block grid")
        if len(message.components) != len(meta.dropped_before):
            raise TransferFormatError("component count does not match keyframe count")
        records = [KeyframeRecord(self.finalize_frame(c), d, c.source_index)
                   for c, d in zip(message.components, meta.dropped_before)]
        selection = SelectionResult(records, meta.blank_count, meta.trailing_drops)
        return assemble(meta.source_id, meta.frame_rate, meta.total_frames, selection, self.params)


def tz_prepare(stream: VideoStream, ctx: TrustedZone, pk: PaillierPublicKey | None = None) -> EncryptedVideo:
    return ctx.prepare(stream, pk)


def tz_finalize(components: EncryptedHashComponents, ctx: TrustedZone) -> FrameHash:
    return ctx.finalize_frame(components)


def block_index_lists(resolution: int, block_grid: int) -> list[list[int]]:
    """Flat pixel indices of each block, row-major block order."""
    check_grid(resolution, block_grid)
    side = resolution // block_grid
    ids = np.arange(resolution * resolution).reshape(block_grid, side, block_grid, side)
    return [ids[by, :, bx, :].ravel().tolist() for by in range(block_grid) for bx in range(block_grid)]


def server_aggregate(ef: EncryptedFrame, pk: PaillierPublicKey, block_grid: int = DEFAULT_BLOCK_GRID,
                     rng=None) -> EncryptedHashComponents:
    """Homomorphic ``E(K * S_k - S)`` for every block, re-randomized.

    Block sums are ciphertext products; ``K * S_k`` is a power by ``K`` and
    ``-S`` a power by ``n - 1``.
    """
    if ef.key_fingerprint != pk.fingerprint():
        raise KeyMismatchError("frame was encrypted under a different public key")
    nn = pk.n_squared
    cts = ef.ciphertexts
    k = block_grid * block_grid
    block_sums = []
    for idx in block_index_lists(ef.resolution, block_grid):
        acc = 1
        for i in idx:
            acc = acc * cts[i] % nn
        block_sums.append(acc)
    total = 1
    for s in block_sums:
        total = total * s % nn
    neg_total = _powmod(total, pk.n - 1, nn)
    rng = rng or secrets.SystemRandom()
    diffs = []
    for s in block_sums:
        c = _powmod(s, k, nn) * neg_total % nn
        blind = _powmod(paillier.random_unit(pk, rng), pk.n, nn)
        diffs.append(c * blind % nn)
    return EncryptedHashComponents(tuple(diffs), ef.source_index, ef.key_fingerprint, rerandomized=True)


def server_process(message: EncryptedVideo, pk: PaillierPublicKey, rng=None) -> EncryptedComponentsVideo:
    """Run :func:`server_aggregate` over every frame of a video."""
    if message.key_fingerprint != pk.fingerprint():
        raise KeyMismatchError("video was encrypted under a different public key")
    comps = tuple(server_aggregate(ef, pk, message.meta.block_grid, rng) for ef in message.frames)
    return EncryptedComponentsVideo(message.meta, comps, message.key_fingerprint)


def encrypted_video_hash(stream: VideoStream, ctx: TrustedZone, rng=None) -> VideoHash:
    """All three stages in one process."""
    return ctx.finalize(server_process(ctx.prepare(stream), ctx.public_key, rng))


# -- transfer files ----------------------------------------------------------
#
# Both files start with: magic (4), u16 version, 8-byte key fingerprint,
# u16 ciphertext width W (bytes of n**2), u32 metadata length M, M bytes of
# UTF-8 JSON metadata (VideoMeta), u32 item count. All fixed-width integers
# are big-endian; ciphertexts are W-byte big-endian unsigned.
#
# HVE1 item (one encrypted frame):
#     u16 F, 8-byte key fingerprint, u32 frame index, F*F ciphertexts
# HVC1 item (one frame's components):
#     u32 frame index, u16 K, u8 rerandomized flag, K ciphertexts

_PREFIX = struct.Struct(">4sH8sHI")


def ciphertext_width(pk: PaillierPublicKey) -> int:
    return (pk.n_squared.bit_length() + 7) // 8


def _pack_cts(values, width: int) -> bytes:
    return b"".join(v.to_bytes(width, "big") for v in values)


def _unpack_cts(data: bytes, pos: int, count: int, width: int) -> tuple[tuple[int, ...], int]:
    end = pos + count * width
    if end > len(data):
        raise TransferFormatError(f"truncated ciphertext array at byte {pos}")
    return tuple(int.from_bytes(data[p:p + width], "big") for p in range(pos, end, width)), end


def _write_prefix(magic: bytes, fp: bytes, width: int, meta: VideoMeta, count: int) -> list[bytes]:
    raw = meta.to_json()
    return [_PREFIX.pack(magic, TRANSFER_VERSION, fp, width, len(raw)), raw, struct.pack(">I", count)]


def _read_prefix(data: bytes, magic: bytes) -> tuple[bytes, int, VideoMeta, int, int]:
    if len(data) < _PREFIX.size:
        raise TransferFormatError("file too short")
    got, version, fp, width, mlen = _PREFIX.unpack_from(data, 0)
    if got != magic:
        raise TransferFormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != TRANSFER_VERSION:
        raise TransferFormatError(f"unsupported transfer version {version}")
    pos = _PREFIX.size
    if pos + mlen + 4 > len(data):
        raise TransferFormatError("truncated metadata")
    meta = VideoMeta.from_json(data[pos:pos + mlen])
    (count,) = struct.unpack_from(">I", data, pos + mlen)
    return fp, width, meta, count, pos + mlen + 4


def write_bundle(message: EncryptedVideo, pk: PaillierPublicKey) -> bytes:
    width = ciphertext_width(pk)
    parts = _write_prefix(BUNDLE_MAGIC, message.key_fingerprint, width, message.meta, len(message.frames))
    for ef in message.frames:
        parts.append(struct.pack(">H8sI", ef.resolution, ef.key_fingerprint, ef.source_index))
        parts.append(_pack_cts(ef.ciphertexts, width))
    return b"".join(parts)


def read_bundle(data: bytes) -> EncryptedVideo:
    fp, width, meta, count, pos = _read_prefix(data, BUNDLE_MAGIC)
    frames = []
    for _ in range(count):
        if pos + 14 > len(data):
            raise TransferFormatError(f"truncated frame header at byte {pos}")
        res, ffp, index = struct.unpack_from(">H8sI", data, pos)
        cts, pos = _unpack_cts(data, pos + 14, res * res, width)
        frames.append(EncryptedFrame(cts, res, index, ffp))
    if pos != len(data):
        raise TransferFormatError("trailing bytes after last frame")
    return EncryptedVideo(meta, tuple(frames), fp)


def write_components(message: EncryptedComponentsVideo, pk: PaillierPublicKey) -> bytes:
    width = ciphertext_width(pk)
    parts = _write_prefix(COMPONENTS_MAGIC, message.key_fingerprint, width, message.meta,
                          len(message.components))
    for c in message.components:
        parts.append(struct.pack(">IHB", c.source_index, len(c.block_diffs), int(c.rerandomized)))
        parts.append(_pack_cts(c.block_diffs, width))
    return b"".join(parts)


def read_components(data: bytes) -> EncryptedComponentsVideo:
    fp, width, meta, count, pos = _read_prefix(data, COMPONENTS_MAGIC)
    comps = []
    for _ in range(count):
        if pos + 7 > len(data):
            raise TransferFormatError(f"truncated component header at byte {pos}")
        index, k, flag = struct.unpack_from(">IHB", data, pos)
        cts, pos = _unpack_cts(data, pos + 7, k, width)
        comps.append(EncryptedHashComponents(cts, index, fp, bool(flag)))
    if pos != len(data):
        raise TransferFormatError("trailing bytes after last component")
    return EncryptedComponentsVideo(meta, tuple(comps), fp)


def save_bundle(message: EncryptedVideo, pk: PaillierPublicKey, path: str | Path) -> None:
    Path(path).write_bytes(write_bundle(message, pk))


def save_components(message: EncryptedComponentsVideo, pk: PaillierPublicKey, path: str | Path) -> None:
    Path(path).write_bytes(write_components(message, pk))
