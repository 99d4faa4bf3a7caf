from __future__ import annotations

import numpy as np


def as_generator(rng=None) -> np.random.Generator:
    """Accept a Generator, an integer seed, a SeedSequence or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def derive_seed(master: int, *keys: int) -> int:
    """Counter-style child seed of ``master`` for the given integer keys."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
