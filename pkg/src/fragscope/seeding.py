"""Counter-mode seed derivation.

``derive_seed(master, i)`` is frozen: archived runs depend on it.  The
construction adds ``(i + 1)`` golden-ratio increments to the master seed and
passes the result through the SplitMix64 finalizer.  For a fixed master the
map ``i -> seed`` is a bijection on 64-bit words (odd multiplier, bijective
finalizer), so distinct stream indices never collide.
"""
import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, stream_index: int) -> int:
    if stream_index < 0:
        raise ValueError("stream_index must be >= 0")
    if not 0 <= master <= MASK64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    return _mix64((master + (stream_index + 1) * _GOLDEN) & MASK64)


def derive_seeds(master: int, stream_indices) -> np.ndarray:
    """Vectorised :func:`derive_seed` over an integer array."""
    idx = np.asarray(stream_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(master) + (idx + np.uint64(1)) * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
    return z


def stream(master: int, stream_index: int) -> np.random.Generator:
    """Independent generator for one replica or chunk."""
    return np.random.default_rng(derive_seed(master, stream_index))
