"""
Hashing a video and finding it again
====================================

Generate a couple of synthetic clips, hash them, and compare a distorted copy
against the originals.
"""

from hvhash.bench import DistortionSpec, apply_distortion, generate_corpus
from hvhash.matcher import compare, similarity
from hvhash.videohash import build_video_hash

videos = generate_corpus(3, duration_range=(3, 4), seed=7)
hashes = [build_video_hash(v) for v in videos]

for h in hashes:
    hdr = h.header
    print(f"{hdr.source_id}: {hdr.total_frames} frames, {len(h.records)} keyframes, "
          f"{hdr.blank_count} blank, {hdr.trailing_drops} trailing")

# %%
# Each keyframe keeps a 64-bit hash and the number of frames skipped before it.

for rec in hashes[0].records:
    print(f"  {rec.hash}  dropped_before={rec.dropped_before:3d}  frame {rec.source_index}")

# %%
# A brightened, noisy, re-compressed copy of the second video.

spec = DistortionSpec(gamma=0.85, snr_db=35.0, quality=6, scale=0.75, seed=3)
copy = build_video_hash(apply_distortion(videos[1], spec))

for h in hashes:
    r = compare(h, copy)
    print(f"{h.header.source_id} vs copy: score {r.score:4d}  similarity {similarity(r):.3f}")
