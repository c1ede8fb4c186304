"""Seeded random streams.

Every random draw in the package comes from a PCG64 generator keyed by
``(seed, *key)`` through :class:`numpy.random.SeedSequence`, so a run is a pure
function of its configuration. Sequential optimizers use worker key 0, which
lines their sampling up with worker 0 of a one-worker simulated cluster.
"""
from __future__ import annotations

import numpy as np

# stream namespaces for the data generators
FEATURES = 1_000_001
LABELS = 1_000_002
SHUFFLE = 1_000_003
PARTITION = 1_000_004
HARNESS = 1_000_005


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *key)``."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def normals(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates by the Box-Muller transform of raw uniforms."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape))
    half = (count + 1) // 2
    u1 = 1.0 - gen.random(half)  # (0, 1], keeps log finite
    u2 = gen.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * half)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count].reshape(shape)


def permutation(n: int, seed: int, epoch: int, worker: int = 0) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` for one epoch of one worker.

    Uses the generator's Fisher-Yates shuffle.
    """
    if n < 1:
        raise ValueError("permutation needs n >= 1")
    return stream(seed, worker, epoch).permutation(n)


def uniform_indices(n: int, count: int, seed: int, epoch: int, worker: int = 0) -> np.ndarray:
    """``count`` indices drawn uniformly with replacement from ``range(n)``."""
    if n < 1:
        raise ValueError("uniform_indices needs n >= 1")
    return stream(seed, worker, epoch).integers(0, n, size=count)
