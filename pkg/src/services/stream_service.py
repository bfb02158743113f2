from typing import Iterator, Tuple

import numpy as np

# Stream tags keep the roles of an experiment on disjoint Philox streams.
TAG_GAUSSIAN = 1
TAG_SUMS = 2
TAG_CONFIRM = 3
TAG_REFERENCE = 4
TAG_PANEL = 5
TAG_PROBES = 6
TAG_MOMENTS = 7


class StreamService:
    """Counter-based random streams keyed by (seed, role, block)."""

    @staticmethod
    def generator(seed: int, *key: int) -> np.random.Generator:
        """Philox generator for the given seed and spawn key; independent of call order."""
        sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(sequence))

    @staticmethod
    def blocks(samples: int, block_size: int) -> Iterator[Tuple[int, int]]:
        """(block index, block length) pairs covering ``samples`` draws."""
        full, rest = divmod(samples, block_size)
        for b in range(full):
            yield b, block_size
        if rest:
            yield full, rest
