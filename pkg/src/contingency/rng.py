"""Seed derivation and random streams.

Every unit of work (an urn run, a market world) owns one stream.  A stream is
a Philox4x64-10 counter-based generator (as shipped in ``numpy.random``) whose
128-bit key is ``(derive_seed(master, stream_id), 0)`` and whose counter starts
at zero.  Uniform doubles are ``(next_uint64 >> 11) * 2**-53``.

``derive_seed`` is the SplitMix64 finalizer applied to
``master + stream_id * 0x9E3779B97F4A7C15 (mod 2**64)``::

    z = (master + stream_id * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z =  z ^ (z >> 31)

For a fixed master this is a bijection of the stream id, so distinct ids can
never collide.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Reserved stream ids.  Urn runs and market worlds use small ids (run index,
# world index); the appeal draw sits far away from them.
APPEAL_STREAM = 0xA99EA1_0000_0000


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value <= MASK64:
        raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")
    return value


def derive_seed(master: int, stream_id: int) -> int:
    """Return the 64-bit seed of stream ``stream_id`` under ``master``."""
    master = _check_u64("master", master)
    stream_id = _check_u64("stream_id", stream_id)
    z = (master + stream_id * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seeds(master: int, stream_ids) -> np.ndarray:
    """Vectorized :func:`derive_seed` over an array of stream ids (uint64)."""
    master = np.uint64(_check_u64("master", master))
    z = np.asarray(stream_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = master + z * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def generator(seed: int) -> np.random.Generator:
    """Philox generator keyed directly by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=_check_u64("seed", seed)))


@dataclass(frozen=True)
class SeedStream:
    master_seed: int
    stream_id: int

    def __post_init__(self):
        _check_u64("master_seed", self.master_seed)
        _check_u64("stream_id", self.stream_id)

    @property
    def seed(self) -> int:
        return derive_seed(self.master_seed, self.stream_id)

    def generator(self) -> np.random.Generator:
        return generator(self.seed)
