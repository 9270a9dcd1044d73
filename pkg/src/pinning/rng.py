"""Seed derivation and ordered parallel map.

Every random task gets its own stream derived from the master seed and a
task path, so adding or reordering tasks never perturbs existing ones.
"""
import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def _path_key(path):
    key = []
    for part in path:
        if isinstance(part, (int, np.integer)) and part >= 0:
            key.append(int(part))
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            key.append(int.from_bytes(digest[:4], "little"))
    return tuple(key)


def seed_sequence(master, *path):
    return np.random.SeedSequence(int(master), spawn_key=_path_key(path))


def derive_seed(master, *path):
    """64-bit integer seed for the task identified by ``path``."""
    state = seed_sequence(master, *path).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(master, *path):
    return np.random.default_rng(seed_sequence(master, *path))


def ordered_map(fn, items, threads=1):
    """``list(map(fn, items))`` evaluated on a thread pool; order is preserved."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
