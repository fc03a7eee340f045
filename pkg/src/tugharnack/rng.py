"""Reproducible random streams.

Two flavours are provided:

* :func:`stream` returns a :class:`numpy.random.Generator` backed by the
  counter-based Philox bit generator, keyed by ``(seed, *key)``.  Streams for
  different keys are independent and do not depend on how work is split
  between workers.
* :func:`stream_key` / :func:`draw` form a tiny stateless counter-based
  generator (a SplitMix64 finaliser applied to ``key + counter``).  The
  compiled kernels use it so that the C and pure-Python code paths consume
  exactly the same random bits.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_COUNTER_MUL = 0xD1B54A32D192ED03
_TWO_M53 = 1.0 / (1 << 53)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the stream identified by ``(seed, *key)``."""
    ss = np.random.SeedSequence([int(seed) & MASK64, *[int(k) & MASK64 for k in key]])
    return np.random.Generator(np.random.Philox(ss))


def mix64(z: int) -> int:
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(key: int, index: int) -> int:
    """Key of sub-stream ``index`` of the stream ``key``."""
    return mix64((key & MASK64) ^ mix64(index & MASK64))


def draw(skey: int, counter: int) -> int:
    """64 random bits at position ``counter`` of stream ``skey``."""
    return mix64((skey + counter * _COUNTER_MUL) & MASK64)


def to_unit(bits: int) -> float:
    """Map 64 random bits to a double in [0, 1)."""
    return (bits >> 11) * _TWO_M53


def key_from(rng: np.random.Generator) -> int:
    """Derive a 64-bit kernel key from a numpy generator."""
    return int(rng.integers(0, 1 << 63, dtype=np.int64))
