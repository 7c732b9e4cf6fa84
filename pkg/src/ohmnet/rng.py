"""Deterministic derivation of independent random streams.

Every source of randomness in the package draws from a generator obtained
through :func:`stream`, keyed by the user seed plus a role tag and the
integers identifying the unit of work (layer, node, epoch, ...).  Work units
therefore own non-overlapping streams, so results do not depend on the order
in which units are processed -- the property that makes parallel walk
generation reproduce sequential output bit for bit.
"""

from __future__ import annotations

import numpy as np

# Role tags keep streams for different purposes disjoint even when the
# remaining key integers coincide.
INIT = 0
WALK = 1
WALK_ORDER = 2
SGD = 3
FOLDS = 4
SYNTH = 5
CLASSIFIER = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``.

    Same arguments, same stream; any differing component yields a
    statistically independent stream.  ``seed`` and all key parts must be
    non-negative integers.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    spawn_key = tuple(int(k) for k in key)
    if any(k < 0 for k in spawn_key):
        raise ValueError("stream key parts must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key))
