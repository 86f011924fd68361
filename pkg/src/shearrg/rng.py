"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
top-level seed. The counter encodes ``(index, stream)`` so that path ``i`` of
an ensemble is the same no matter which worker produces it or in which order.
"""

import numpy as np

# stream tags; one per independent use of randomness
PATHS = 1
BRIDGES = 2
FIELD = 3
FIELD_TIME = 4
REALIZATIONS = 5

_MASK = (1 << 64) - 1


def generator(seed, index=0, stream=0):
    """Return a Generator for item ``index`` of ``stream`` under ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    bitgen = np.random.Philox(key=int(seed) & _MASK,
                              counter=[0, 0, int(index) & _MASK, int(stream) & _MASK])
    return np.random.Generator(bitgen)


def normals(seed, indices, size, stream=PATHS):
    """Stack ``size`` standard normals per index into an array of shape (len(indices), size)."""
    indices = np.atleast_1d(indices)
    out = np.empty((len(indices), size))
    for row, i in enumerate(indices):
        out[row] = generator(seed, i, stream).standard_normal(size)
    return out


def derive(seed, *labels):
    """Derive a child seed from ``seed`` and integer labels (for nested ensembles)."""
    ss = np.random.SeedSequence([int(seed), *[int(x) for x in labels]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
