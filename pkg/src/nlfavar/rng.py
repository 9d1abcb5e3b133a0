"""Named random substreams derived from a single base seed.

Every stochastic component draws from ``substream(seed, name, *index)``, so
turning one component on or off never shifts the numbers seen by another.
"""
import zlib

import numpy as np

STREAMS = ("dgp", "sampler", "ae-init", "ae-shuffle", "shapley", "predictive", "lle")


def _key(name):
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(seed, name, *index):
    """SeedSequence for ``(seed, name, index...)``; indices must be non-negative ints."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(_key(name),) + tuple(int(i) for i in index))


def substream(seed, name, *index):
    return np.random.default_rng(seed_sequence(seed, name, *index))


def derive_seed(seed, name, *index):
    """Integer seed for APIs that want an int rather than a Generator."""
    return int(seed_sequence(seed, name, *index).generate_state(1, dtype=np.uint32)[0])
