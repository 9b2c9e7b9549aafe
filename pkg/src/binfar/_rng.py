"""Counter-based random streams.

Every random draw in the library comes from a Philox4x64 generator keyed by a
``SeedSequence`` built from the user seed followed by integer stream labels, e.g.
``stream(seed, replication)``. Streams therefore depend only on their labels and
not on the order in which replications are executed.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    entropy = [check_seed(seed), *(int(k) for k in key)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
