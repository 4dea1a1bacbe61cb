"""Deterministic random streams.

A single 64-bit master seed drives everything. The stream for a
(replica, stream id) pair is a Philox generator keyed by
``SeedSequence(seed, spawn_key=(replica, stream))``, so any replica can be
regenerated independently of scheduling and worker count.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """Stream ids, one per consumer of randomness."""

    BROWNIAN = 0
    INITIAL = 1
    GIBBS = 2
    BOOTSTRAP = 3
    SPECTRAL = 4


def rng_for(seed: int, replica: int, stream: int | Stream) -> np.random.Generator:
    """Generator for one (seed, replica, stream) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replica), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def stream_fingerprint(seed: int, replica: int, stream: int | Stream) -> str:
    """Stable identifier of a stream, recorded on trajectories."""
    return f"{int(seed)}:{int(replica)}:{int(stream)}"
