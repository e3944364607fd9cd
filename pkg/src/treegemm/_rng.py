"""Counter-based RNG used for TLU failure draws.

Every draw is a pure function of (seed, row, step, node), so batch order,
chunking, and thread count cannot change any result. Both evaluation
backends implement exactly this construction; tests assert bit-identity.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

STEP_COMPARE = 2
STEP_EQUAL = 4

_U53_INV = 2.0 ** -53


def mix64(z: np.ndarray) -> np.ndarray:
    """One splitmix64 output step over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + GOLDEN
        z = (z ^ (z >> np.uint64(30))) * MIX1
        z = (z ^ (z >> np.uint64(27))) * MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def key_hash(seed: int, rows, step: int, nodes) -> np.ndarray:
    """Hash the (seed, row, step, node) key; broadcasts rows against nodes."""
    h = mix64(np.asarray(np.uint64(seed)))
    h = mix64(h ^ np.asarray(rows, dtype=np.uint64))
    h = mix64(h ^ np.uint64(step))
    h = mix64(h ^ np.asarray(nodes, dtype=np.uint64))
    return h


def uniforms(h: np.ndarray) -> np.ndarray:
    """Map hashes to float64 uniforms in [0, 1) using the top 53 bits."""
    return (h >> np.uint64(11)).astype(np.float64) * _U53_INV
