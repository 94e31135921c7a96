"""Counter-based random substreams.

A substream is a Philox generator whose key is a hash of an arbitrary tuple,
so draws for (seed, epoch, sample_id) never depend on the order in which
other substreams were consumed.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream(*key) -> np.random.Generator:
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=np.frombuffer(digest, dtype=np.uint64)))


def rng_stream(seed: int, epoch: int, sample_id: str) -> np.random.Generator:
    """Augmentation stream for one sample in one epoch."""
    return substream(int(seed), "augment", int(epoch), str(sample_id))
