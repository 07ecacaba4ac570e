"""
Named random substreams.

Every consumer of randomness asks for its own generator by name plus a few
integers (silo id, round, ...). Streams never depend on call order or on
which worker thread happens to run a job.
"""

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, name, *keys)."""
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError(f"seed and stream keys must be non-negative, got {seed}, {keys}")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(_name_key(name), *keys))
    return np.random.default_rng(seq)


def silo_stream(seed: int, silo_id: int, round_index: int, purpose: str = "silo") -> np.random.Generator:
    # stream id = (global seed, silo id, round); purpose separates trainer kinds
    return stream(seed, purpose, silo_id, round_index)
