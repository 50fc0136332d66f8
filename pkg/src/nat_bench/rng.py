"""Counter-based seed derivation.

Every random quantity in the package is drawn from a numpy ``Generator``
seeded with ``mix64(base_seed, frame_index, ...)``. Because the child seed
depends only on the (seed, index) pair, per-frame results do not depend on
iteration order or on how work is split across threads.

The mixing function is the SplitMix64 finalizer applied to
``state + 0x9E3779B97F4A7C15 * (value + 1)``, folded over the extra keys.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# stream tags, keep stable: changing one changes every derived result
STREAM_FIXATIONS = 1
STREAM_BOOTSTRAP = 2
STREAM_EVAL = 3
STREAM_TRUTH = 4
STREAM_IOC = 5
STREAM_IDEAL = 6


def splitmix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(base_seed, *keys):
    """Derive a 64-bit child seed from ``base_seed`` and integer keys."""
    state = int(base_seed) & MASK64
    for key in keys:
        state = splitmix64(state + GOLDEN_GAMMA * (int(key) + 1))
    return state


def child_rng(base_seed, *keys):
    """Return a fresh ``numpy.random.Generator`` for the derived stream."""
    return np.random.default_rng(mix64(base_seed, *keys))


def as_rng(rng):
    """Accept a Generator, an int seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
