"""Counter-based random streams for reproducible, order-independent Monte Carlo.

Every stream is keyed by (master seed, stream label, stream index) packed
into a 128-bit Philox key, so replicate r of any estimator draws from its
own stream regardless of execution order, chunking, or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream labels keep independent uses of the same (seed, index) pair disjoint.
PATHS = 0
AUX_UNIFORM = 1
GAUSS_FIELD = 2
OBSERVATIONS = 3
TRIALS = 4


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus replicate index; fully determines one draw."""

    master_seed: int
    replicate_index: int = 0

    def __post_init__(self):
        if self.replicate_index < 0:
            raise ValueError("replicate_index must be nonnegative")
        if not 0 <= self.master_seed < (1 << 64):
            raise ValueError("master_seed must fit in 64 bits")


def stream(master_seed: int, label: int = PATHS, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, label, index).

    The key packs the master seed in the low word and (label, index) in the
    high word, so distinct triples never collide (index < 2**48).
    """
    if not 0 <= index < (1 << 48):
        raise ValueError("stream index out of range")
    if not 0 <= label < (1 << 16):
        raise ValueError("stream label out of range")
    hi = ((label << 48) | index) & _MASK64
    key = (int(master_seed) & _MASK64) | (hi << 64)
    return np.random.Generator(np.random.Philox(key=key))


def path_stream(seed: SeedSpec) -> np.random.Generator:
    return stream(seed.master_seed, PATHS, seed.replicate_index)
