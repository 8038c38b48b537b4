"""Reproducible random streams.

Two kinds of streams are used. Tree simulations draw from a counter-based
hash keyed by each particle's Ulam-Harris path, so a particle's offspring
count and displacement do not depend on traversal order or worker layout.
Everything else (Monte Carlo shards, limit-law draws) uses numpy Generators
seeded from a SeedSequence built out of the run seed and string labels.
"""
from __future__ import annotations

import zlib

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


def mix64(z):
    """splitmix64 finalizer applied elementwise to uint64 data."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z ^ (z >> _S30)
        z = z * _M1
        z = z ^ (z >> _S27)
        z = z * _M2
        z = z ^ (z >> _S31)
    return z


def root_key(seed: int, replica: int = 0) -> np.uint64:
    """Key of the root particle for a given (seed, replica) pair."""
    with np.errstate(over="ignore"):
        k = mix64(np.uint64(seed % 2**64) + _GOLDEN)
        k = mix64(k ^ mix64(np.uint64(replica % 2**64) * _GOLDEN + _M2))
    return np.uint64(k)


def child_keys(parent_keys, child_index):
    """Keys of children: hash of the parent key and the child's index."""
    idx = np.asarray(child_index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.asarray(parent_keys, dtype=np.uint64) ^ mix64(idx + _GOLDEN))


def keyed_uniforms(keys, counter: int = 0):
    """Uniforms in (0, 1) determined by (key, counter); 53 bits of precision."""
    with np.errstate(over="ignore"):
        c = np.uint64(counter + 1) * _GOLDEN
        bits = mix64(np.asarray(keys, dtype=np.uint64) + c) >> _S11
    return (bits.astype(np.float64) + 0.5) * _TWO_M53


def _label_word(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) % 2**32
    return zlib.crc32(str(label).encode())


def seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    words = [int(seed) % 2**64 & 0xFFFFFFFF, (int(seed) % 2**64) >> 32]
    words += [_label_word(lab) for lab in labels]
    return np.random.SeedSequence(words)


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent Generator for (seed, labels); identical inputs give identical draws."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *labels)))


def spawn_streams(seed: int, count: int, *labels) -> list[np.random.Generator]:
    """`count` independent shard streams under one label set."""
    return [np.random.Generator(np.random.Philox(s))
            for s in seed_sequence(seed, *labels).spawn(count)]
