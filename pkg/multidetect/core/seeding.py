"""
RNG split scheme.

Every random stream is derived from a root seed plus a path of keys, e.g.
``derive_rng(trial_seed, "models")`` or ``derive_seed(master, "rep", 7)``. Keys are
turned into integers (CRC32 for strings) and fed with the root seed into a
``numpy.random.SeedSequence``, so a stream depends only on its path: serial and
parallel executions draw identical numbers.
"""
import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_code(key: Key) -> int:
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("Seed keys must be int or str")
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"Seed keys must be non-negative, got {key}")
        return int(key)
    return zlib.crc32(key.encode("utf-8"))


def seed_sequence(root: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_code(root), *(_key_code(k) for k in keys)])


def derive_seed(root: int, *keys: Key) -> int:
    """A 32-bit seed for ``root`` + ``keys`` (for libraries taking an int ``random_state``)."""
    return int(seed_sequence(root, *keys).generate_state(1, dtype=np.uint32)[0])


def derive_rng(root: int, *keys: Key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(root, *keys)))
