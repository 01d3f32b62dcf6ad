"""Counter-based random streams derived from one master seed.

Every consumer of randomness asks for a stream keyed by (round, agent, purpose),
so the draws an agent sees never depend on how many other agents ran before it.
"""
import numpy as np

INIT = 0
COMPRESSION = 1
GRADIENT = 2
DATA = 3


def stream(seed, *key):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def agent_stream(seed, t, agent, purpose):
    return stream(seed, t, agent, purpose)


def round_streams(seed, t, n, purpose):
    """One generator per agent for round ``t``."""
    return [agent_stream(seed, t, i, purpose) for i in range(n)]
