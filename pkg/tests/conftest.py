import random

import numpy as np
import pytest

from hvhash import paillier
from hvhash.framehash import FrameHash
from hvhash.keyframes import KeyframeRecord
from hvhash.videohash import VideoHash, VideoHashHeader

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def toy_keys():
    return paillier.keypair_from_primes(5, 7)


@pytest.fixture(scope="session")
def keys512():
    return paillier.generate_keypair(512, rng_seed=2024)


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


def string_hash(text: str, drops=None, source_id: str = "s", block_grid: int = 8) -> VideoHash:
    """A video hash whose records are the characters of ``text``."""
    drops = drops or [0] * len(text)
    records = tuple(KeyframeRecord(FrameHash(ord(ch), block_grid * block_grid), d, i)
                    for i, (ch, d) in enumerate(zip(text, drops)))
    total = len(records) + sum(drops)
    header = VideoHashHeader(source_id, total, 30.0, 0, 0, 100.0 * len(records) / total if total else 0.0,
                             64, block_grid)
    return VideoHash(header, records)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
