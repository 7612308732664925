"""Counter-based random streams keyed by ``(seed, replica)``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, TypeVar

import numpy as np

from .errors import OutOfRange

T = TypeVar("T")

DEFAULT_SEED = 42
_U64 = 1 << 64


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < _U64:
        raise OutOfRange(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Independent stream for one replica; same ``(seed, replica)`` gives the same draws.

    Philox is a counter-based generator, so each key names its own stream and
    there is no sequential state shared between replicas.
    """
    seed = check_seed(seed)
    if not 0 <= replica < _U64:
        raise OutOfRange(f"replica index out of range: {replica}")
    return np.random.Generator(np.random.Philox(key=(seed << 64) | replica))


def default_threads() -> int:
    return os.cpu_count() or 1


def map_replicas(
    fn: Callable[[int, np.random.Generator], T],
    replicas: int,
    seed: int,
    threads: Optional[int] = None,
) -> list[T]:
    """``[fn(r, replica_generator(seed, r)) for r in range(replicas)]``, possibly threaded.

    Results come back in replica order, so folds over them do not depend on
    the thread count.
    """
    seed = check_seed(seed)
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise OutOfRange("threads must be >= 1")

    def job(r):
        return fn(r, replica_generator(seed, r))

    if threads == 1 or replicas <= 1:
        return [job(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(replicas)))
