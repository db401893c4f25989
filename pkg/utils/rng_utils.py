# rng_utils.py - Deterministic random streams derived from one master seed

from typing import List

import numpy as np


class SeedStreams:
    """
    Derives isolated, reproducible generators from a master seed.

    Every consumer (driver paths, filter steps, Monte-Carlo oracles) asks for
    its stream by a purpose key and an index, so results do not depend on the
    order or grouping in which streams are requested.
    """

    # Purpose keys; part of the reproducibility contract, do not renumber.
    DRIVER = 0
    FILTER = 1
    MARTINGALE = 2
    ORACLE = 3

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)

    def sequence(self, purpose: int, index: int = 0) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=(purpose, index))

    def generator(self, purpose: int, index: int = 0) -> np.random.Generator:
        """Generator for one (purpose, index) pair."""
        return np.random.default_rng(self.sequence(purpose, index))

    def generators(self, purpose: int, count: int) -> List[np.random.Generator]:
        """Generators for indices 0..count-1 of a purpose."""
        return [self.generator(purpose, i) for i in range(count)]
