"""Seed handling.

Every random draw in the package goes through a ``numpy.random.Generator``.
Trial-level streams are derived from ``(seed, *keys)`` so that results do not
depend on the order in which trials are executed.
"""

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def keyed_generator(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for the work item identified by ``keys``."""
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])
