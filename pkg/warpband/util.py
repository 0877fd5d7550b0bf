import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar, Optional

import numpy as np

log = logging.getLogger(__name__)
T = TypeVar("T")
R = TypeVar("R")

SEED_ENV_VAR = "WARPBAND_SEED"


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Creates a generator that is a pure function of the seed and stream ids.

    Parameters
    ----------
    seed: int
        The master seed.
    stream: int
        Any number of integers identifying the stream,
        for example the draw index.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def resolve_seed(seed: Optional[int]) -> int:
    """Returns the given seed, falling back to ``WARPBAND_SEED`` and then 0."""
    if seed is not None:
        return int(seed)

    env = os.environ.get(SEED_ENV_VAR)
    if env:
        log.debug("Using seed %s from %s", env, SEED_ENV_VAR)
        return int(env)

    return 0


def ordered_map(func: Callable[[T], R], items: Iterable[T], *, threads: int = 1) -> list[R]:
    """Map ``func`` over ``items`` preserving input order.

    Work is spread over at most ``threads`` worker threads, the
    output order is always the input order.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
