"""Counter-based pseudo-random primitives built on splitmix64.

Every random quantity in this package is a pure function of a 64-bit stream
key and a counter, so generation order, batching and parallel schedules never
change the output.  Keys for substreams (one per edge block, trajectory,
corpus instance, ...) are derived from a master seed with `stream_key`.
"""

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def mix64(z):
    """splitmix64 finalizer on a uint64 array (elementwise)."""
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def stream_key(seed, stream) -> int:
    """Key of the `stream`-th substream of the master seed.

    This is the canonical splitmix64 output sequence seeded at `seed`; keys of
    distinct streams are mutually pseudo-independent.
    """
    s = (int(seed) + ((int(stream) + 1) * GOLDEN)) & _MASK
    return _mix64_int(s)


def uniform01(key, counters):
    """U[0,1) draws at the given counters.

    `key` may be a scalar or an array broadcasting against `counters`; the
    value at (key, counter) never depends on anything else.
    """
    k = np.asarray(key, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    z = mix64(k + np.uint64(GOLDEN) * (c + np.uint64(1)))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def normals(key, counters):
    """Standard normal draws, one per counter (Box-Muller, cosine branch)."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = uniform01(key, c * np.uint64(2))
    u2 = uniform01(key, c * np.uint64(2) + np.uint64(1))
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2.0 * np.pi * u2)
