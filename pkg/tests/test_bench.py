import math

import numpy as np
import pytest

from hvhash.bench import (COMPRESSION_LABEL, FULL_RANGES, MILD_RANGES, DistortionRangeError, DistortionSpec,
                          apply_compression, apply_distortion, apply_gamma, concatenate, gamma_lut,
                          generate_corpus, measured_snr_db, quant_factor, roc_curve, run_robustness_suite,
                          sensitivity_curves)
from hvhash.matcher import compare, similarity
from hvhash.media import VideoStream
from hvhash.videohash import build_video_hash

# similarity at or above this counts as a duplicate in the dedup pass
DEDUP_THRESHOLD = 0.5


@pytest.fixture(scope="module")
def corpus50():
    return generate_corpus(50, seed=11)


def test_corpus_deterministic():
    a = generate_corpus(3, seed=5)
    b = generate_corpus(3, seed=5)
    assert [v.pixels.tobytes() for v in a] == [v.pixels.tobytes() for v in b]
    assert [v.source_id for v in a] == [v.source_id for v in b]
    c = generate_corpus(3, seed=6)
    assert a[0].pixels.tobytes() != c[0].pixels.tobytes()


def test_corpus_shape():
    corpus = generate_corpus(200, (2.0, 6.0), 30.0, seed=0)
    assert len(corpus) == 200
    assert all(60 <= len(v.pixels) <= 180 and v.width >= 64 and v.height >= 64 for v in corpus)
    assert len({v.source_id for v in corpus}) == 200


def test_corpus_needs_two_videos():
    with pytest.raises(ValueError):
        generate_corpus(1)


def test_dedup_pass(corpus50):
    hashes = [build_video_hash(v) for v in corpus50]
    worst = max(similarity(compare(hashes[i], hashes[j]))
                for i in range(len(hashes)) for j in range(i + 1, len(hashes)))
    assert worst < DEDUP_THRESHOLD


def test_identity_spec_leaves_frames_unchanged():
    v = generate_corpus(2, (2, 2), seed=3)[0]
    spec = DistortionSpec()
    assert spec.is_identity
    assert np.array_equal(apply_distortion(v, spec).pixels, v.pixels)


def test_gamma_on_mid_gray():
    assert gamma_lut(2.0)[128] == 64
    assert apply_gamma(np.array([[128]], np.uint8), 2.0)[0, 0] == 64
    assert np.array_equal(gamma_lut(1.0), np.arange(256))


def test_snr_calibration():
    frame = np.random.default_rng(0).integers(30, 220, (64, 64)).astype(np.uint8)
    stream = VideoStream(frame[None], 30.0)
    snrs = [measured_snr_db(frame, apply_distortion(stream, DistortionSpec(snr_db=15.0, seed=s)).pixels[0])
            for s in range(100)]
    assert abs(np.mean(snrs) - 15.0) <= 1.0


@pytest.mark.parametrize("kwargs", [dict(gamma=0.4), dict(gamma=2.1), dict(snr_db=10.0), dict(quality=1),
                                    dict(quality=24), dict(scale=0.2), dict(scale=1.5)])
def test_spec_out_of_range(kwargs):
    with pytest.raises(DistortionRangeError):
        DistortionSpec(**kwargs)


def test_ranges_sample_within_bounds():
    rng = np.random.default_rng(1)
    for ranges in (FULL_RANGES, MILD_RANGES):
        for _ in range(200):
            s = ranges.sample(rng)
            assert ranges.gamma[0] <= s.gamma <= ranges.gamma[1]
            assert ranges.quality[0] <= s.quality <= ranges.quality[1]


def test_compression_strength_grows_with_quality():
    assert quant_factor(2) == pytest.approx(0.1) and quant_factor(23) == pytest.approx(2.0)
    img = np.random.default_rng(2).integers(0, 256, (1, 64, 64)).astype(np.uint8)
    err = [np.abs(apply_compression(img, q).astype(int) - img).mean() for q in (2, 12, 23)]
    assert err[0] < err[1] < err[2]
    assert "surrogate" in COMPRESSION_LABEL


def test_distortion_order_is_fixed():
    v = generate_corpus(2, (2, 2), seed=4)[0]
    spec = DistortionSpec(gamma=1.5, snr_db=30.0, quality=8, scale=0.5, seed=9)
    assert np.array_equal(apply_distortion(v, spec).pixels, apply_distortion(v, spec).pixels)


def test_roc_monotone_and_bounds():
    rng = np.random.default_rng(0)
    rep = roc_curve(rng.uniform(0.4, 1, 300), rng.uniform(0, 0.6, 500))
    assert rep.thresholds == sorted(rep.thresholds)
    assert all(a >= b for a, b in zip(rep.tpr, rep.tpr[1:]))
    assert all(a >= b for a, b in zip(rep.fpr, rep.fpr[1:]))
    assert all(0 <= x <= 1 for x in rep.tpr + rep.fpr)
    assert rep.thresholds[0] == 0 and rep.tpr[0] == 1.0 and rep.fpr[0] == 1.0
    assert rep.tpr[-1] == 0.0 and rep.fpr[-1] == 0.0


def test_roc_unsupported_fpr_targets():
    rep = roc_curve([1.0, 0.9], [0.1] * 500, fpr_targets=(1e-2, 1e-4, 1e-7))
    assert rep.tpr_at_fpr[1e-2] == 1.0
    assert rep.tpr_at_fpr[1e-4] is None and rep.tpr_at_fpr[1e-7] is None
    assert len(rep.warnings) == 2 and "10000000" in rep.warnings[1]


def test_roc_perfect_separation():
    rep = roc_curve([0.9, 1.0], [0.1, 0.2])
    assert rep.crossover_accuracy == 1.0
    assert 0.2 < rep.crossover_threshold <= 0.9


def test_roc_requires_both_classes():
    with pytest.raises(ValueError):
        roc_curve([], [0.1])


def test_sensitivity_bins():
    similar = [{"spec": DistortionSpec(gamma=g, snr_db=30.0, quality=5, scale=1.0).to_dict(), "similarity": s}
               for g, s in ((0.5, 1.0), (2.0, 0.5), (1.0, 0.8))]
    curves = sensitivity_curves(similar, 0.7)
    gamma = curves["gamma"]
    assert gamma[0].count == 1 and gamma[0].mean_similarity == 1.0
    assert gamma[-1].count == 1 and gamma[-1].tpr == 0.0
    assert sum(b.count for b in gamma) == 3


def test_embedded_clip():
    parts = generate_corpus(3, (3, 3), seed=8)
    clip = parts[1]
    compilation = concatenate([parts[0], clip], "comp")
    assert len(compilation.pixels) == 180
    r = compare(build_video_hash(clip), build_video_hash(compilation))
    assert similarity(r) >= 0.95


def test_small_suite(tmp_path):
    corpus = generate_corpus(6, (2, 3), seed=1)
    with pytest.warns(UserWarning):
        res = run_robustness_suite(corpus, variants_per_video=2, seed=3, ranges=MILD_RANGES)
    assert len(res.similar) == 12 and len(res.different) == 15
    paths = res.write(tmp_path)
    assert {p.name for p in paths} == {"report.json", "sensitivity_gamma.csv", "sensitivity_snr_db.csv",
                                      "sensitivity_quality.csv", "sensitivity_scale.csv"}
    with pytest.warns(UserWarning):
        again = run_robustness_suite(corpus, variants_per_video=2, seed=3, ranges=MILD_RANGES)
    assert [s["similarity"] for s in again.similar] == [s["similarity"] for s in res.similar]


def test_identity_suite():
    corpus = generate_corpus(4, (2, 2), seed=2)
    res = run_robustness_suite(corpus, variants_per_video=2, identity=True, sensitivity_fpr=0.2)
    assert all(s["similarity"] == 1.0 for s in res.similar)
    assert not math.isnan(res.roc.crossover_accuracy)
