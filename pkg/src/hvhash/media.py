"""Video ingestion (Y4M, netpbm frame directories) and frame pre-processing.

Frames are 8-bit luma grids. A :class:`VideoStream` keeps all frames in one
``(T, H, W)`` uint8 array so pre-processing can run over a whole video at once.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import BinaryIO

import numpy as np

DEFAULT_RESOLUTION = 64


class MediaError(ValueError):
    """Input could not be parsed or is inconsistent."""


class Y4MError(MediaError):
    def __init__(self, message: str, offset: int, frame_index: int | None = None):
        where = f"byte {offset}" if frame_index is None else f"frame {frame_index}, byte {offset}"
        super().__init__(f"{message} ({where})")
        self.offset = offset
        self.frame_index = frame_index


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray  # (height, width) uint8
    source_index: int

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PreprocessedFrame:
    pixels: np.ndarray  # (F, F) uint8, equalized
    source_index: int
    # spread of the resized frame before equalization, which would otherwise
    # stretch a near-constant frame to the full range
    luma_std: float | None = None

    @property
    def resolution(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class VideoStream:
    pixels: np.ndarray  # (T, H, W) uint8
    frame_rate: float
    source_id: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] == 0:
            raise MediaError("a video needs at least one 2-D frame")
        if self.pixels.dtype != np.uint8:
            raise MediaError(f"expected uint8 pixels, got {self.pixels.dtype}")
        if not self.frame_rate > 0:
            raise MediaError("frame_rate must be positive")

    def __len__(self) -> int:
        return self.pixels.shape[0]

    @property
    def frames(self) -> list[Frame]:
        return [Frame(p, i) for i, p in enumerate(self.pixels)]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_frames(cls, frames, frame_rate: float, source_id: str = "") -> "VideoStream":
        arrays = [f.pixels if isinstance(f, Frame) else np.asarray(f) for f in frames]
        if not arrays:
            raise MediaError("a video needs at least one frame")
        if len({a.shape for a in arrays}) != 1:
            raise MediaError("frames have inconsistent dimensions")
        return cls(np.stack(arrays).astype(np.uint8), frame_rate, source_id)


# -- Y4M -------------------------------------------------------------------

_CHROMA_PLANES = {
    "420": lambda w, h: 2 * ((w + 1) // 2) * ((h + 1) // 2),
    "422": lambda w, h: 2 * ((w + 1) // 2) * h,
    "444": lambda w, h: 2 * w * h,
    "mono": lambda w, h: 0,
}
_SIGNATURE = b"YUV4MPEG2"


def _chroma_family(tag: str, offset: int) -> str:
    m = re.fullmatch(r"(420|422|444|mono)(jpeg|paldv|mpeg2|alpha)?(p\d+)?", tag)
    if not m:
        raise Y4MError(f"unsupported colour space C{tag}", offset)
    if m.group(3) and m.group(3) != "p8":
        raise Y4MError(f"unsupported bit depth C{tag}; only 8-bit is handled", offset)
    if m.group(2) == "alpha":
        raise Y4MError("4:4:4 with alpha is not supported", offset)
    return m.group(1)


def parse_y4m(data: bytes | BinaryIO, source_id: str = "") -> VideoStream:
    """Parse a YUV4MPEG2 stream and keep only the Y plane of each frame."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = data.read()
    buf = memoryview(data)
    if not bytes(buf[: len(_SIGNATURE)]) == _SIGNATURE:
        raise Y4MError("missing YUV4MPEG2 signature", 0)
    eol = data.find(b"\n")
    if eol < 0:
        raise Y4MError("unterminated stream header", len(data))
    width = height = None
    rate = Fraction(25)
    chroma = "420"
    pos = len(_SIGNATURE)
    for token in bytes(buf[pos:eol]).decode("ascii", "replace").split(" "):
        if not token:
            pos += 1
            continue
        key, val = token[0], token[1:]
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                rate = Fraction(int(num), int(den))
            elif key == "C":
                chroma = _chroma_family(val, pos)
        except Y4MError:
            raise
        except (ValueError, ZeroDivisionError):
            raise Y4MError(f"bad header tag {token!r}", pos) from None
        pos += len(token) + 1
    if not width or not height or width <= 0 or height <= 0:
        raise Y4MError("header lacks positive W and H", 0)
    if rate <= 0:
        raise Y4MError("frame rate must be positive", 0)

    luma = width * height
    payload = luma + _CHROMA_PLANES[chroma](width, height)
    frames = []
    pos = eol + 1
    while pos < len(data):
        if bytes(buf[pos:pos + 5]) != b"FRAME":
            raise Y4MError("expected FRAME marker", pos, len(frames))
        line_end = data.find(b"\n", pos)
        if line_end < 0:
            raise Y4MError("unterminated FRAME header", pos, len(frames))
        start = line_end + 1
        if start + payload > len(data):
            raise Y4MError(f"truncated frame payload: need {payload} bytes, have {len(data) - start}",
                           start, len(frames))
        frames.append(np.frombuffer(data, np.uint8, luma, start).reshape(height, width))
        pos = start + payload
    if not frames:
        raise Y4MError("stream contains no frames", pos)
    return VideoStream(np.stack(frames), float(rate), source_id)


def read_y4m(path: str | Path) -> VideoStream:
    path = Path(path)
    return parse_y4m(path.read_bytes(), source_id=path.stem)


def write_y4m(stream: VideoStream, chroma: str = "444") -> bytes:
    """Serialize luma frames to Y4M; chroma planes are filled with 128."""
    if chroma not in ("420", "422", "444", "mono"):
        raise MediaError(f"cannot write chroma {chroma}")
    h, w = stream.height, stream.width
    rate = Fraction(stream.frame_rate).limit_denominator(1001)
    out = [f"YUV4MPEG2 W{w} H{h} F{rate.numerator}:{rate.denominator} Ip A1:1 C{chroma}\n".encode()]
    pad = bytes([128]) * _CHROMA_PLANES[chroma](w, h)
    for frame in stream.pixels:
        out += [b"FRAME\n", frame.tobytes(), pad]
    return b"".join(out)


# -- frame directories -------------------------------------------------------

def _netpbm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    values, pos = [], 2
    while len(values) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        end = pos
        while end < len(data) and data[end:end + 1].isdigit():
            end += 1
        if end == pos:
            raise MediaError("malformed netpbm header")
        values.append(int(data[pos:end]))
        pos = end
    return values, pos + 1  # a single whitespace byte precedes the raster


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Integer luma ``round((77 R + 150 G + 29 B) / 256)``."""
    rgb = rgb.astype(np.uint32)
    y = (77 * rgb[..., 0] + 150 * rgb[..., 1] + 29 * rgb[..., 2] + 128) >> 8
    return np.minimum(y, 255).astype(np.uint8)


def read_netpbm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) with maxval 255 as a luma grid."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise MediaError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    (w, h, maxval), start = _netpbm_tokens(data, 3)
    if maxval != 255:
        raise MediaError(f"{path}: maxval {maxval} unsupported, expected 255")
    channels = 1 if magic == b"P5" else 3
    size = w * h * channels
    if len(data) < start + size:
        raise MediaError(f"{path}: truncated raster")
    raster = np.frombuffer(data, np.uint8, size, start)
    if channels == 1:
        return raster.reshape(h, w).copy()
    return rgb_to_luma(raster.reshape(h, w, 3))


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.astype(np.uint8).tobytes())


def load_frame_directory(path: str | Path, frame_rate: float, source_id: str | None = None) -> VideoStream:
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise MediaError(f"{path}: no frame files")
    frames = []
    for f in files:
        try:
            frames.append(read_netpbm(f))
        except OSError as exc:
            raise MediaError(f"{f}: unreadable ({exc})") from exc
        if frames[-1].shape != frames[0].shape:
            raise MediaError(f"{f}: dimensions {frames[-1].shape[::-1]} differ from "
                             f"{frames[0].shape[::-1]} of {files[0].name}")
    return VideoStream(np.stack(frames), frame_rate, source_id if source_id is not None else path.name)


# -- pre-processing ----------------------------------------------------------

def bilinear_weights(src: int, dst: int) -> np.ndarray:
    """``(dst, src)`` interpolation matrix with pixel-centre alignment.

    Output sample ``i`` reads source coordinate ``(i + 0.5) * src / dst - 0.5``
    clamped to the image; each row sums to one.
    """
    coord = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    coord = np.clip(coord, 0, src - 1)
    lo = np.floor(coord).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    frac = coord - lo
    w = np.zeros((dst, src))
    rows = np.arange(dst)
    np.add.at(w, (rows, lo), 1 - frac)
    np.add.at(w, (rows, hi), frac)
    return w


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x) + 0.5)


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a ``(H, W)`` or ``(T, H, W)`` uint8 array."""
    src_h, src_w = pixels.shape[-2:]
    if (src_h, src_w) == (height, width):
        return pixels.astype(np.uint8, copy=True)
    wy = bilinear_weights(src_h, height)
    wx = bilinear_weights(src_w, width)
    out = (wy @ pixels.astype(np.float64)) @ wx.T
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def equalize_histogram(pixels: np.ndarray) -> np.ndarray:
    """256-bin equalization of ``(H, W)`` or ``(T, H, W)`` uint8 frames.

    Each frame is remapped by ``round(255 (cdf(v) - cdf_min) / (N - cdf_min))``
    in exact integer arithmetic. Single-level frames are returned unchanged.
    """
    flat = pixels.reshape(-1, pixels.shape[-2] * pixels.shape[-1])
    t, npix = flat.shape
    offsets = (np.arange(t) * 256)[:, None]
    counts = np.bincount((flat.astype(np.int64) + offsets).ravel(), minlength=256 * t).reshape(t, 256)
    cdf = np.cumsum(counts, axis=1)
    cdf_min = cdf[np.arange(t), np.argmax(counts > 0, axis=1)][:, None]
    denom = npix - cdf_min
    safe = np.where(denom == 0, 1, denom)
    lut = (2 * 255 * np.maximum(cdf - cdf_min, 0) + safe) // (2 * safe)
    lut = np.where(denom == 0, np.arange(256)[None, :], lut).astype(np.uint8)
    out = np.take_along_axis(lut, flat.astype(np.int64), axis=1)
    return out.reshape(pixels.shape)


def preprocess_array(pixels: np.ndarray, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    return equalize_histogram(resize_bilinear(pixels, resolution, resolution))


def frame_std(pixels: np.ndarray) -> np.ndarray:
    """Population standard deviation per frame over the last two axes."""
    return pixels.reshape(*pixels.shape[:-2], -1).astype(np.float64).std(axis=-1)


def preprocess(frame: Frame, resolution: int = DEFAULT_RESOLUTION) -> PreprocessedFrame:
    """Resize to ``resolution`` squared, then equalize the histogram."""
    resized = resize_bilinear(frame.pixels, resolution, resolution)
    return PreprocessedFrame(equalize_histogram(resized), frame.source_index, float(frame_std(resized)))


def preprocess_stream(stream: VideoStream, resolution: int = DEFAULT_RESOLUTION) -> list[PreprocessedFrame]:
    resized = resize_bilinear(stream.pixels, resolution, resolution)
    stds = frame_std(resized).tolist()
    return [PreprocessedFrame(p, i, s) for i, (p, s) in enumerate(zip(equalize_histogram(resized), stds))]
