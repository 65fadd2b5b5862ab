"""Counter-based expansion of one master seed into named random streams.

Every stream is ``numpy.random.SeedSequence(master, spawn_key=(stream, *counters))``.
The spawn key is a tuple of small integers, so the stream an individual or a
replicate receives depends only on the master seed and its own counters, never
on how many other streams were created before it.

Stream identifiers
------------------
``INIT``       initial states, key ``(INIT, 0)``; positions of compartment ``c``
               (0 = S, 1 = I, 2 = R), key ``(INIT, c + 1)``
``CURVES``     infectivity curves, key ``(CURVES, cohort)`` (0 initial, 1 new)
``THINNING``   Poisson driver of susceptible ``i``, key ``(THINNING, i)``
``EXPERIMENT`` replicate seeds, key ``(EXPERIMENT, k, N)``
"""

import numpy as np

INIT = 0
CURVES = 1
THINNING = 2
EXPERIMENT = 3


def stream(master, *key):
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key)))


def derive_seed(master, *key):
    """Return a 63-bit integer seed derived from ``master`` and ``key``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def replicate_seed(master, k, N=0):
    return derive_seed(master, EXPERIMENT, k, N)
