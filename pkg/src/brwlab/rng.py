"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose 128-bit
key is derived from ``(seed, purpose, index)``.  Two streams with different
keys are statistically independent, and any stream can be rebuilt from its
key alone, so replicas can run in any order or on any worker.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags
GROW = 1
MARKS = 2
SPINE = 3
MONTE_CARLO = 4
REPLICA = 5


def splitmix64(x):
    """One round of the SplitMix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(seed, i):
    """Seed of replica ``i`` derived from a run seed.

    ``mix(seed, i) = splitmix64(seed XOR splitmix64(i))``.  Re-running replica
    ``i`` alone reproduces it exactly.
    """
    return splitmix64((int(seed) & MASK64) ^ splitmix64(int(i) & MASK64))


def stream(seed, purpose, index=0):
    """Return a ``numpy.random.Generator`` keyed by ``(seed, purpose, index)``."""
    if not 0 <= purpose < (1 << 16):
        raise ValueError("purpose tag must fit in 16 bits")
    if not 0 <= index < (1 << 48):
        raise ValueError("stream index must fit in 48 bits")
    key = np.array([int(seed) & MASK64, (purpose << 48) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
