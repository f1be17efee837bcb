"""Counter-based random stream derivation.

Every replica gets its own generator keyed by ``derive_seed(master, index,
stream)``, a SplitMix64 hash of the counter triple, feeding a Philox
generator.  Streams therefore depend only on ``(master seed, purpose,
replica index)`` and never on scheduling or worker count.

The derivation, for reimplementers::

    base = splitmix64(master + GOLDEN * (stream + 1))
    seed = splitmix64(base + GOLDEN * (index + 1))
    rng  = numpy.random.Generator(numpy.random.Philox(key=seed))

with all arithmetic modulo 2**64.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# stream purposes
TRAJECTORY = 0
R0_POOL = 1
TWO_STAGE = 2
BOOTSTRAP = 3
SYNTHETIC = 4


def splitmix64(x):
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master, index, stream=TRAJECTORY):
    base = splitmix64((int(master) + GOLDEN * (stream + 1)) & MASK64)
    return splitmix64((base + GOLDEN * (int(index) + 1)) & MASK64)


def make_rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def replica_rng(master, index, stream=TRAJECTORY):
    return make_rng(derive_seed(master, index, stream))
