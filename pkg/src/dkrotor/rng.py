"""Counter-based random streams keyed by (seed, index).

A splitmix64 hash maps (seed, stream index) straight to a uniform variate, so
every trajectory or ensemble member owns its value independently of execution
order: serial, blocked and multiprocess runs agree bit for bit.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, indices: np.ndarray | int) -> np.ndarray:
    """Uniform variates in [0,1), one per stream index."""
    idx = np.atleast_1d(np.asarray(indices)).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (idx + np.uint64(1)) * _GAMMA)
        u = _mix(z)
    # take the top 53 bits for a full-precision double in [0,1)
    return (u >> np.uint64(11)).astype(np.float64) * 2.0**-53
