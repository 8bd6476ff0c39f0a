"""Deterministic, splittable random streams.

Every stream is a Philox counter-based generator keyed by a SeedSequence built
from the base seed and an arbitrary tuple of integer keys, so the stream for
``(seed, block)`` never depends on how many workers are running.
"""
import numpy as np

#: Replicas are processed in fixed-size blocks; block ``b`` owns stream ``(seed, b)``.
REPLICA_BLOCK = 1024


def stream(seed, *keys):
    """Return an independent generator for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def split_seed(seed, index):
    """Derive an integer child seed, used when a whole run needs a new base seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def blocks(replicas, block=REPLICA_BLOCK):
    """Yield ``(block_index, size)`` for a static partition of ``replicas``."""
    b = 0
    start = 0
    while start < replicas:
        size = min(block, replicas - start)
        yield b, size
        b += 1
        start += size


class UniformBuffer:
    """Scalar uniforms on (0, 1) drawn from a generator in large chunks.

    Pure-Python samplers call ``next()`` millions of times; drawing in
    chunks keeps the per-call cost to a list index.
    """

    def __init__(self, rng, chunk=8192):
        self._rng = rng
        self._chunk = chunk
        self._buf = []
        self._pos = 0

    def __call__(self):
        if self._pos >= len(self._buf):
            # open interval so that -log(u) is always finite
            u = self._rng.random(self._chunk)
            u[u == 0.0] = 0.5 ** 53
            self._buf = u.tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v
