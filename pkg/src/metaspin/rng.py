"""Random number generation.

Every random stream in the package is a :class:`numpy.random.Generator`
driven by the Philox4x64-10 counter-based bit generator.  Streams are
derived from a single 64-bit integer seed:

* ``make_rng(seed)`` -> ``Generator(Philox(SeedSequence(seed)))``
* ``replica_rng(seed, i)`` -> ``Generator(Philox(SeedSequence(seed, spawn_key=(i,))))``

so replica ``i`` of a run with base seed ``seed`` is reproducible on its own,
independently of how many replicas run or in which thread.  The generators
are passed straight into the numba kernels, which advance the same Philox
state as the Python side.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def _check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed > SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_seed(seed))))


def replica_rng(seed, index) -> np.random.Generator:
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def replica_seed(seed, index) -> int:
    """64-bit integer summarising the replica stream (for records and logs)."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
