"""Counter-based random streams.

Every draw in the package comes from ``stream(seed, name, *keys)``: a Philox
generator keyed by the experiment seed, a named stream and any number of
integer keys (trial index, batch index, ...).  The same triple always yields
the same numbers, independently of which other streams were consumed before,
so parallel workers never need shared state.
"""

from __future__ import annotations

import zlib

import numpy as np

# Fixed stream ids.  Names are hashed for anything not listed.
STREAMS = {
    "sample": 1,
    "signs": 2,
    "oracle": 3,
    "noise": 4,
    "trial": 5,
    "calibrate": 6,
    "complexity": 7,
    "verify": 8,
}


def stream_id(name: str) -> int:
    if name in STREAMS:
        return STREAMS[name]
    return 1000 + zlib.crc32(name.encode())


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return the generator for ``(seed, name, keys)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(name), *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
