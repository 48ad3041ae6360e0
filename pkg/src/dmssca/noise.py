"""Counter-based noise streams.

Every random quantity in a run is a deterministic function of
(run seed, purpose tag, position), so any single draw can be reproduced
without replaying the run and independent of execution order. Streams are
materialized in fixed-size chunks, each chunk seeded by
(seed, tag, chunk index).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# stable tag codes; part of the reproducibility contract, do not renumber
TAG_ITER = 1
TAG_INIT = 2
TAG_X0 = 3
TAG_SELECT = 4

_CHUNK = 4096


def stream(seed: int, tag: int, chunk: int = 0) -> np.random.Generator:
    """Generator for the given (seed, tag, chunk) key."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence((seed, tag, chunk)))


@lru_cache(maxsize=8)
def _chunk_block(seed: int, tag: int, chunk: int, n: int, dim: int) -> np.ndarray:
    block = stream(seed, tag, chunk).standard_normal((_CHUNK, n, dim))
    block.setflags(write=False)
    return block


class NoiseTape:
    """Standard-normal draws indexed by iteration, shape (n, dim) per index.

    The draw at index t lives in chunk t // _CHUNK at offset t % _CHUNK,
    so tape[t] never depends on how many other indices were accessed.
    """

    def __init__(self, seed: int, tag: int, n: int, dim: int):
        self.seed = seed
        self.tag = tag
        self.n = n
        self.dim = dim

    def row(self, idx: int) -> np.ndarray:
        if idx < 0:
            raise IndexError(f"tape index must be nonnegative, got {idx}")
        c, r = divmod(idx, _CHUNK)
        return _chunk_block(self.seed, self.tag, c, self.n, self.dim)[r]


def init_batch(seed: int, n: int, dim: int, b0: int) -> np.ndarray:
    """Draws for the size-b0 gradient batch at the first iterate, shape (b0, n, dim)."""
    return stream(seed, TAG_INIT).standard_normal((b0, n, dim))
