"""Counter-based random streams.

Every simulation in this package draws from a Philox generator keyed by
(master seed, stream index).  Streams with the same key produce the same
draws no matter how work is scheduled, so batched or threaded runs are
reproducible and individual paths can be replayed in isolation.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream", "stream", "batch_streams", "derive_seed", "BATCH_SIZE"]

# Paths are simulated in fixed-size batches; the batch, not the worker,
# owns the stream.  Changing this constant changes the draw sequence.
BATCH_SIZE = 1 << 18


def stream(master_seed, *key):
    """Return a Generator for the sub-stream identified by ``key``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=ss))


def batch_streams(master_seed, n_paths, batch_size=BATCH_SIZE):
    """Yield (start, stop, Generator) batch triples covering ``n_paths``."""
    start = 0
    index = 0
    while start < n_paths:
        stop = min(start + batch_size, n_paths)
        yield start, stop, stream(master_seed, index)
        start = stop
        index += 1


def derive_seed(master_seed, *key):
    """A 64-bit seed deterministically derived from (master_seed, key)."""
    return int(np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=tuple(int(k) for k in key)
    ).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class RngStream:
    """Handle for one path's private stream.

    The same (seed, index) pair always reproduces the same draws,
    independent of how many other paths run or on how many workers.
    """

    seed: int
    index: int

    def generator(self):
        return stream(self.seed, self.index)
