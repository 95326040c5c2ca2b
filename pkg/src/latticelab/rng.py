"""Keyed, counter-based random streams.

A stream is identified by (master_seed, label, tag, replica). The first
three are hashed into a Philox key and the replica index sits in the
counter, so any replica can be generated on any worker without shared state.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(master_seed: int, label: str, tag=0) -> np.ndarray:
    """128-bit Philox key derived from the stream identity."""
    text = f"{int(master_seed)}|{label}|{tag}".encode()
    digest = hashlib.blake2b(text, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def bit_generator(master_seed: int, label: str, tag=0, replica: int = 0) -> np.random.Philox:
    counter = np.array([0, 0, int(replica), 0], dtype=np.uint64)
    return np.random.Philox(counter=counter, key=stream_key(master_seed, label, tag))


def generator(master_seed: int, label: str, tag=0, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(bit_generator(master_seed, label, tag, replica))
