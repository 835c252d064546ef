import numpy as np


def derive_seed(seed, *keys):
    """Child seed for ``keys`` under ``seed``; independent of call order."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed, *keys):
    """PCG64 generator for the stream addressed by ``(seed, *keys)``."""
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("cannot derive keyed streams from a Generator")
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
