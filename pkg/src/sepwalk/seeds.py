"""Deterministic seed derivation.

``split_seed(master, i)`` hashes ``(master, i)`` through numpy's SeedSequence,
so the seed of replica ``i`` does not depend on how many replicas are run.
"""

import numpy as np


def split_seed(master: int, index: int, *path: int) -> int:
    key = (int(index),) + tuple(int(p) for p in path)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replica_seeds(master: int, index: int):
    """Environment and walker seeds for replica ``index``."""
    return split_seed(master, index, 0), split_seed(master, index, 1)
