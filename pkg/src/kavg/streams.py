"""Counter-based random streams.

Every random draw in a run is addressed by a lineage ``(n, j, k, s)``:
global round, learner, local step and sample index inside the mini-batch.
The draw is a keyed Philox evaluation at a counter built from the lineage,
so it does not depend on the order in which learners are simulated or on
how many threads are used.

The key holds ``(root_seed, domain)``; the counter holds ``(0, k, j, n)``.
Word 0 of the counter is left free for the generator's own increments, so
blocks belonging to different lineages never overlap.  Sample ``s`` is row
``s`` of the block drawn for ``(n, j, k)``; numpy fills blocks sequentially,
so that row does not depend on the batch size requested.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream domains keep unrelated consumers of the same root seed apart.
GRADIENT = 0
STALENESS = 1
CERTIFY = 2


def block_generator(root_seed: int, n: int, j: int = 0, k: int = 0,
                    domain: int = GRADIENT) -> np.random.Generator:
    """Generator positioned at the start of the block for lineage ``(n, j, k)``."""
    if n < 0 or j < 0 or k < 0:
        raise ValueError("lineage indices must be nonnegative")
    key = np.array([int(root_seed) & _MASK64, domain], dtype=np.uint64)
    counter = np.array([0, k, j, n], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class RngStream:
    """Address of a single draw ``xi^j_{k,s}``."""

    root_seed: int
    lineage: tuple[int, int, int, int] = (0, 0, 0, 0)
    domain: int = GRADIENT

    def __post_init__(self):
        if len(self.lineage) != 4 or any(int(x) < 0 for x in self.lineage):
            raise ValueError(f"lineage must be four nonnegative ints, got {self.lineage!r}")

    def generator(self) -> np.random.Generator:
        n, j, k, _ = self.lineage
        return block_generator(self.root_seed, n, j, k, self.domain)

    @property
    def sample_index(self) -> int:
        return self.lineage[3]

    def normal(self, dim: int) -> np.ndarray:
        s = self.sample_index
        return self.generator().standard_normal((s + 1, dim))[s]

    def integer(self, high: int) -> int:
        s = self.sample_index
        return int(self.generator().integers(0, high, size=s + 1)[s])
