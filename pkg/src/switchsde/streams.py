"""Reproducible random streams.

Every stochastic routine in the package draws from a counter-based
(Philox) bit generator keyed off a single 64-bit master seed.  A stream
is addressed by ``(kind, index)``: chain streams and Brownian streams of
the same trajectory are distinct streams, so the switching chain is
independent of the driving noise by construction, and any single
trajectory can be replayed in isolation.  Block or worker boundaries
never enter the derivation, which keeps results independent of the
worker count.
"""

import numpy as np

CHAIN = 0
NOISE = 1
BOOTSTRAP = 2
PROBE = 3


def substream(master_seed, kind, index=0):
    """Return the Philox generator for stream ``(kind, index)``.

    Parameters
    ----------
    master_seed : int
        64-bit master seed of the run.
    kind : int
        Stream family (CHAIN, NOISE, BOOTSTRAP or PROBE).
    index : int
        Trajectory number within the family.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(kind), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def chain_stream(master_seed, index=0):
    """Stream driving the switching chain of trajectory ``index``."""
    return substream(master_seed, CHAIN, index)


def noise_stream(master_seed, index=0):
    """Stream driving the Brownian increments of trajectory ``index``."""
    return substream(master_seed, NOISE, index)


def bootstrap_stream(master_seed):
    """Dedicated stream for bootstrap resampling."""
    return substream(master_seed, BOOTSTRAP, 0)
