"""
Hashing without showing the server any pixels
=============================================

The trusted zone selects and encrypts keyframes, the server aggregates block
sums under encryption, and the trusted zone turns the result into hash bits.
The result is compared byte for byte with the plaintext hash.
"""

import time

from hvhash import paillier
from hvhash.encrypted import TrustedZone, server_process
from hvhash.bench import generate_corpus
from hvhash.videohash import build_video_hash, serialize

video = generate_corpus(2, duration_range=(2, 2), seed=5)[0]
pk, sk = paillier.generate_keypair(512, rng_seed=11)
tz = TrustedZone(sk)

t0 = time.perf_counter()
outbound = tz.prepare(video)               # trusted zone -> server
print(f"{len(outbound.frames)} keyframes, {len(outbound.frames[0].ciphertexts)} ciphertexts each")

inbound = server_process(outbound, pk)     # server -> trusted zone
encrypted_hash = tz.finalize(inbound)
print(f"encrypted pipeline: {time.perf_counter() - t0:.1f} s")

# %%
# Same bytes as the plaintext pipeline.

plain = build_video_hash(video)
print("identical:", serialize(encrypted_hash) == serialize(plain))
