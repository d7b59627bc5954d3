"""Deterministic RNG derivation.

Every random decision in the package flows from one integer seed. Substreams
are derived by hashing a label path into a SeedSequence spawn key, so adding a
new consumer never perturbs existing streams.
"""

import zlib

import numpy as np


def derive_seed_sequence(seed: int, *labels: str) -> np.random.SeedSequence:
    key = tuple(zlib.crc32(lab.encode("utf-8")) for lab in labels)
    return np.random.SeedSequence(seed, spawn_key=key)


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    """Independent Generator for the substream named by `labels`."""
    return np.random.default_rng(derive_seed_sequence(seed, *labels))
