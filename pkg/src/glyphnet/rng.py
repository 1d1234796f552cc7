"""Deterministic random streams.

All randomness in the package flows from a single integer seed. Distinct
consumers (parameter init, shuffling, corpus splits, ...) get independent
substreams keyed by small integers, so adding a new consumer never
perturbs existing ones. Philox is counter-based, which makes every stream
bitwise reproducible across runs and platforms.
"""

from __future__ import annotations

import numpy as np

# Stream ids. Never renumber: checkpoints and committed fixtures depend
# on these assignments.
STREAM_LOOKUP = 1
STREAM_CONV1 = 2
STREAM_CONV2 = 3
STREAM_CONV3 = 4
STREAM_FC1 = 5
STREAM_FC2 = 6
STREAM_GRU = 7
STREAM_HEAD = 8
STREAM_FUSION = 9
STREAM_SHUFFLE = 100
STREAM_SPLIT = 200
STREAM_FIXTURE = 300


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for (seed, key).

    The same (seed, key) pair always yields the same stream; different
    keys yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
