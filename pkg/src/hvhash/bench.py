"""Desk-scale robustness evaluation on a synthetic corpus.

Distortions run per frame in a fixed order: gamma, down-and-up scaling, a
compression surrogate (8x8 block DCT quantization, *not* an MPEG codec), then
additive Gaussian noise at a target SNR. Each step re-quantizes to 8 bits.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dctn, idctn

from .keyframes import SelectionParams
from .matcher import MatchParams, compare, similarity
from .media import VideoStream, resize_bilinear, round_half_up
from .videohash import VideoHash, build_video_hash

COMPRESSION_LABEL = "compression surrogate: per-frame 8x8 DCT quantization (not an MPEG codec)"

GAMMA_RANGE = (0.5, 2.0)
SNR_RANGE = (15.0, 60.0)
QUALITY_RANGE = (2, 23)
SCALE_RANGE = (0.25, 1.0)

# standard JPEG luminance table
LUMA_QUANT = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)
QUANT_FACTOR_MILD = 0.1
QUANT_FACTOR_STRONG = 2.0


class DistortionRangeError(ValueError):
    pass


@dataclass(frozen=True)
class DistortionSpec:
    gamma: float = 1.0
    snr_db: float = math.inf
    quality: int | None = None
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.gamma != 1.0 and not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            raise DistortionRangeError(f"gamma {self.gamma} outside {GAMMA_RANGE}")
        if self.snr_db != math.inf and not SNR_RANGE[0] <= self.snr_db <= SNR_RANGE[1]:
            raise DistortionRangeError(f"SNR {self.snr_db} dB outside {SNR_RANGE}")
        if self.quality is not None and not QUALITY_RANGE[0] <= self.quality <= QUALITY_RANGE[1]:
            raise DistortionRangeError(f"quality {self.quality} outside {QUALITY_RANGE}")
        if self.scale != 1.0 and not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise DistortionRangeError(f"scale {self.scale} outside {SCALE_RANGE}")

    @property
    def is_identity(self) -> bool:
        return self.gamma == 1.0 and self.snr_db == math.inf and self.quality is None and self.scale == 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = None if self.snr_db == math.inf else self.snr_db
        return d


@dataclass(frozen=True)
class DistortionRanges:
    gamma: tuple[float, float] = GAMMA_RANGE
    snr_db: tuple[float, float] = SNR_RANGE
    quality: tuple[int, int] = QUALITY_RANGE
    scale: tuple[float, float] = SCALE_RANGE

    def sample(self, rng: np.random.Generator) -> DistortionSpec:
        # log-uniform gamma keeps 1/g and g equally likely
        lo, hi = np.log(self.gamma)
        return DistortionSpec(
            gamma=float(np.exp(rng.uniform(lo, hi))),
            snr_db=float(rng.uniform(*self.snr_db)),
            quality=int(rng.integers(self.quality[0], self.quality[1] + 1)),
            scale=float(rng.uniform(*self.scale)),
            seed=int(rng.integers(2**31)),
        )


FULL_RANGES = DistortionRanges()
MILD_RANGES = DistortionRanges(gamma=(0.8, 1.25), snr_db=(25.0, 60.0), quality=(2, 10), scale=(0.5, 1.0))


# -- corpus --------------------------------------------------------------------

def _smooth_field(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    coarse = rng.random((cells, cells))
    wy = _interp_matrix(cells, size)
    return wy @ coarse @ wy.T


def _interp_matrix(src: int, dst: int) -> np.ndarray:
    from .media import bilinear_weights
    return bilinear_weights(src, dst)


def _sample_shift(img: np.ndarray, oy: float, ox: float, h: int, w: int) -> np.ndarray:
    """Bilinear crop of ``img`` at fractional offset ``(oy, ox)``."""
    iy, ix = int(oy), int(ox)
    fy, fx = oy - iy, ox - ix
    a = img[iy:iy + h + 1, ix:ix + w + 1]
    top = a[:-1, :-1] * (1 - fx) + a[:-1, 1:] * fx
    bot = a[1:, :-1] * (1 - fx) + a[1:, 1:] * fx
    return top * (1 - fy) + bot * fy


def synthetic_video(rng: np.random.Generator, frames: int, size: int = 96, frame_rate: float = 30.0,
                    source_id: str = "") -> VideoStream:
    """A panning, evolving smooth texture with drifting blobs.

    Some videos open with a run of black frames so the blank path is
    exercised.
    """
    margin = size
    big = size + 2 * margin
    fields = [_smooth_field(rng, big, int(rng.integers(5, 10))) for _ in range(2)]
    speed = rng.uniform(0.3, 0.9)
    angle = rng.uniform(0, 2 * np.pi)
    vy, vx = speed * np.sin(angle), speed * np.cos(angle)
    oy0 = rng.uniform(0, margin - 1)
    ox0 = rng.uniform(0, margin - 1)
    # keep the pan inside the padded field by bouncing off its edges
    def wrap(o):
        span = margin - 1
        o = np.mod(o, 2 * span)
        return np.where(o > span, 2 * span - o, o)

    n_blobs = int(rng.integers(2, 5))
    centers = rng.uniform(0, size, (n_blobs, 2))
    velocity = rng.normal(0, 0.6, (n_blobs, 2))
    radii = rng.uniform(size / 10, size / 4, n_blobs)
    amps = rng.uniform(-0.8, 0.8, n_blobs)
    blend_rate = rng.uniform(0.005, 0.02)
    contrast = rng.uniform(0.6, 1.0)
    brightness = rng.uniform(0.3, 0.7)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    t = np.arange(frames)
    oys, oxs = wrap(oy0 + vy * t), wrap(ox0 + vx * t)
    out = np.empty((frames, size, size), dtype=np.uint8)
    for i in range(frames):
        a = 0.5 - 0.5 * np.cos(2 * np.pi * blend_rate * i)
        base = (1 - a) * _sample_shift(fields[0], oys[i], oxs[i], size, size) \
            + a * _sample_shift(fields[1], oys[i], oxs[i], size, size)
        base = (base - base.mean()) / (base.std() + 1e-9) * 0.18
        c = centers + velocity * i
        for (cy, cx), r, amp in zip(c, radii, amps):
            base += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)) * 0.4
        img = brightness + contrast * base
        out[i] = np.clip(round_half_up(255 * img), 0, 255)
    if rng.random() < 0.3:
        out[: int(rng.integers(1, 10))] = 0
    return VideoStream(out, frame_rate, source_id)


def generate_corpus(count: int, duration_range: tuple[float, float] = (2.0, 6.0), frame_rate: float = 30.0,
                    seed: int = 0, size: int = 96) -> list[VideoStream]:
    """``count`` synthetic videos, deterministic per ``seed``."""
    if count < 2:
        raise ValueError("a corpus needs at least two videos")
    children = np.random.SeedSequence(seed).spawn(count)
    corpus = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        duration = rng.uniform(*duration_range)
        frames = max(1, int(round(duration * frame_rate)))
        corpus.append(synthetic_video(rng, frames, size, frame_rate, f"syn{seed}-{i:05d}"))
    return corpus


def concatenate(streams, source_id: str = "") -> VideoStream:
    rates = {s.frame_rate for s in streams}
    if len(rates) != 1:
        raise ValueError("cannot concatenate streams with different frame rates")
    return VideoStream(np.concatenate([s.pixels for s in streams]), rates.pop(), source_id)


# -- distortions ---------------------------------------------------------------

def gamma_lut(gamma: float) -> np.ndarray:
    v = np.arange(256) / 255.0
    return np.clip(round_half_up(255 * v ** gamma), 0, 255).astype(np.uint8)


def apply_gamma(pixels: np.ndarray, gamma: float) -> np.ndarray:
    return gamma_lut(gamma)[pixels]


def apply_scaling(pixels: np.ndarray, scale: float) -> np.ndarray:
    h, w = pixels.shape[-2:]
    small = resize_bilinear(pixels, max(1, round(h * scale)), max(1, round(w * scale)))
    return resize_bilinear(small, h, w)


def quant_factor(quality: int) -> float:
    """Linear map from quality 2 (mild) to 23 (strong)."""
    lo, hi = QUALITY_RANGE
    return QUANT_FACTOR_MILD + (quality - lo) * (QUANT_FACTOR_STRONG - QUANT_FACTOR_MILD) / (hi - lo)


def apply_compression(pixels: np.ndarray, quality: int) -> np.ndarray:
    """8x8 block DCT, quantization with a scaled luminance table, inverse DCT."""
    q = np.maximum(1.0, np.round(LUMA_QUANT * quant_factor(quality)))
    h, w = pixels.shape[-2:]
    ph, pw = -h % 8, -w % 8
    lead = [(0, 0)] * (pixels.ndim - 2)
    padded = np.pad(pixels.astype(np.float64) - 128.0, lead + [(0, ph), (0, pw)], mode="edge")
    H, W = padded.shape[-2:]
    blocks = padded.reshape(*padded.shape[:-2], H // 8, 8, W // 8, 8)
    coef = dctn(blocks, axes=(-3, -1), norm="ortho")
    coef = np.round(coef / q[:, None, :]) * q[:, None, :]
    rec = idctn(coef, axes=(-3, -1), norm="ortho").reshape(padded.shape)[..., :h, :w] + 128.0
    return np.clip(round_half_up(rec), 0, 255).astype(np.uint8)


def noise_sigma(pixels: np.ndarray, snr_db: float) -> np.ndarray:
    """Per-frame noise deviation for signal power = mean squared pixel value."""
    power = (pixels.astype(np.float64) ** 2).reshape(*pixels.shape[:-2], -1).mean(axis=-1)
    return np.sqrt(power / 10 ** (snr_db / 10))


def apply_noise(pixels: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    sigma = noise_sigma(pixels, snr_db)[..., None, None]
    noisy = pixels + rng.standard_normal(pixels.shape) * sigma
    return np.clip(round_half_up(noisy), 0, 255).astype(np.uint8)


def apply_distortion(stream: VideoStream, spec: DistortionSpec) -> VideoStream:
    """gamma -> scale -> compression -> noise, each re-quantized to 8 bits."""
    px = stream.pixels
    if spec.gamma != 1.0:
        px = apply_gamma(px, spec.gamma)
    if spec.scale != 1.0:
        px = apply_scaling(px, spec.scale)
    if spec.quality is not None:
        px = apply_compression(px, spec.quality)
    if spec.snr_db != math.inf:
        px = apply_noise(px, spec.snr_db, np.random.default_rng(spec.seed))
    return VideoStream(px.copy() if px is stream.pixels else px, stream.frame_rate, stream.source_id)


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    signal = np.mean(clean.astype(np.float64) ** 2)
    noise = np.mean((noisy.astype(np.float64) - clean) ** 2)
    return float(10 * np.log10(signal / noise))


# -- ROC -----------------------------------------------------------------------

DEFAULT_FPR_TARGETS = (1e-4, 1e-5, 1e-7)


@dataclass
class RocReport:
    thresholds: list[float]
    tpr: list[float]
    fpr: list[float]
    crossover_accuracy: float
    crossover_threshold: float
    tpr_at_fpr: dict[float, float | None]
    n_similar: int
    n_different: int
    warnings: list[str] = field(default_factory=list)

    def threshold_at_fpr(self, target: float) -> float:
        """Smallest threshold whose FPR does not exceed ``target``."""
        for t, f in zip(self.thresholds, self.fpr):
            if f <= target:
                return t
        return self.thresholds[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tpr_at_fpr"] = {format(k, "g"): v for k, v in self.tpr_at_fpr.items()}
        return d


def roc_curve(similar, different, fpr_targets=DEFAULT_FPR_TARGETS) -> RocReport:
    """Sweep a ``score >= t`` decision over every distinct score.

    TPR and FPR are non-increasing in the threshold. The crossover accuracy is
    the best ``min(TPR, 1 - FPR)`` over the sweep.
    """
    sim = np.sort(np.asarray(similar, dtype=np.float64))
    dif = np.sort(np.asarray(different, dtype=np.float64))
    if sim.size == 0 or dif.size == 0:
        raise ValueError("need both similar and different scores")
    cand = np.unique(np.concatenate([[0.0], sim, dif]))
    top = cand[-1]
    thresholds = np.concatenate([cand, [np.nextafter(top, np.inf)]])
    tpr = 1 - np.searchsorted(sim, thresholds, side="left") / sim.size
    fpr = 1 - np.searchsorted(dif, thresholds, side="left") / dif.size
    balanced = np.minimum(tpr, 1 - fpr)
    best = int(np.argmax(balanced))
    at_fpr: dict[float, float | None] = {}
    notes = []
    for target in fpr_targets:
        if dif.size * target < 1:
            at_fpr[target] = None
            notes.append(f"FPR {target:g} needs at least {math.ceil(1 / target)} different pairs; "
                         f"have {dif.size}")
            continue
        ok = np.nonzero(fpr <= target)[0]
        at_fpr[target] = float(tpr[ok[0]])
    return RocReport(thresholds.tolist(), tpr.tolist(), fpr.tolist(), float(balanced[best]),
                     float(thresholds[best]), at_fpr, int(sim.size), int(dif.size), notes)


# -- suite ---------------------------------------------------------------------

SENSITIVITY_BINS = {
    "gamma": [0.5, 0.63, 0.79, 0.94, 1.06, 1.26, 1.59, 2.0],
    "snr_db": [15, 20, 25, 30, 40, 50, 60],
    "quality": [2, 5, 8, 11, 14, 17, 20, 23],
    "scale": [0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0],
}


@dataclass
class SensitivityBin:
    lo: float
    hi: float
    count: int
    mean_similarity: float | None
    tpr: float | None


@dataclass
class SuiteResult:
    roc: RocReport
    similar: list[dict]
    different: list[float]
    sensitivity: dict[str, list[SensitivityBin]]
    sensitivity_fpr: float
    sensitivity_threshold: float
    params: dict
    compression: str = COMPRESSION_LABEL

    def to_dict(self) -> dict:
        return {
            "compression": self.compression,
            "params": self.params,
            "roc": self.roc.to_dict(),
            "sensitivity_fpr": self.sensitivity_fpr,
            "sensitivity_threshold": self.sensitivity_threshold,
            "sensitivity": {k: [asdict(b) for b in v] for k, v in self.sensitivity.items()},
            "similar": self.similar,
            "different_count": len(self.different),
        }

    def write(self, directory: str | Path) -> list[Path]:
        """``report.json`` plus one CSV per sensitivity panel."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / "report.json"]
        paths[0].write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        for name, bins in self.sensitivity.items():
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow(["bin_lo", "bin_hi", "count", "mean_similarity", "tpr"])
            for b in bins:
                writer.writerow([b.lo, b.hi, b.count, "" if b.mean_similarity is None else b.mean_similarity,
                                 "" if b.tpr is None else b.tpr])
            path = directory / f"sensitivity_{name}.csv"
            path.write_text(buf.getvalue())
            paths.append(path)
        return paths


def sensitivity_curves(similar: list[dict], threshold: float, bins=SENSITIVITY_BINS) -> dict[str, list[SensitivityBin]]:
    """Bucket similar pairs by each distortion parameter, pooling all others."""
    out = {}
    sims = np.array([s["similarity"] for s in similar])
    for name, edges in bins.items():
        vals = np.array([np.nan if s["spec"][name] is None else s["spec"][name] for s in similar], dtype=float)
        curve = []
        for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            last = i == len(edges) - 2
            sel = (vals >= lo) & ((vals <= hi) if last else (vals < hi))
            n = int(sel.sum())
            curve.append(SensitivityBin(lo, hi, n, float(sims[sel].mean()) if n else None,
                                        float((sims[sel] >= threshold).mean()) if n else None))
        out[name] = curve
    return out


def run_robustness_suite(corpus: list[VideoStream], variants_per_video: int = 25,
                         match_params: MatchParams = MatchParams(),
                         selection_params: SelectionParams = SelectionParams(), seed: int = 0,
                         ranges: DistortionRanges = FULL_RANGES, fpr_targets=DEFAULT_FPR_TARGETS,
                         sensitivity_fpr: float = 1e-3, identity: bool = False,
                         threads: int = 1) -> SuiteResult:
    """Score originals against their distorted variants and against each other.

    With ``identity=True`` every variant is the undistorted video.
    """
    originals = [build_video_hash(v, selection_params) for v in corpus]
    rng = np.random.default_rng(seed)
    jobs = []
    for vi in range(len(corpus)):
        for _ in range(variants_per_video):
            jobs.append((vi, DistortionSpec(seed=int(rng.integers(2**31))) if identity else ranges.sample(rng)))

    def run(job):
        vi, spec = job
        h = build_video_hash(apply_distortion(corpus[vi], spec), selection_params)
        r = compare(originals[vi], h, match_params)
        return {"video": corpus[vi].source_id, "spec": spec.to_dict(), "score": r.score,
                "similarity": similarity(r)}

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            similar = list(pool.map(run, jobs))
    else:
        similar = [run(j) for j in jobs]

    different = []
    for i in range(len(originals)):
        for j in range(i + 1, len(originals)):
            different.append(similarity(compare(originals[i], originals[j], match_params)))

    sim_values = [s["similarity"] for s in similar]
    roc = roc_curve(sim_values, different, fpr_targets)
    if len(different) * sensitivity_fpr < 1:
        warnings.warn(f"sensitivity FPR {sensitivity_fpr:g} is below the corpus resolution "
                      f"1/{len(different)}; using the latter")
        roc.warnings.append(f"sensitivity FPR raised from {sensitivity_fpr:g} to 1/{len(different)}")
        sensitivity_fpr = 1 / len(different)
    threshold = roc.threshold_at_fpr(sensitivity_fpr)
    params = {"videos": len(corpus), "variants_per_video": variants_per_video, "seed": seed,
              "ranges": asdict(ranges), "match": asdict(match_params),
              "selection": asdict(selection_params), "identity": identity}
    return SuiteResult(roc, similar, different, sensitivity_curves(similar, threshold), sensitivity_fpr,
                       threshold, params)
