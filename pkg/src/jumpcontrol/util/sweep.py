from __future__ import annotations

import logging
import os
import typing
from concurrent.futures import ThreadPoolExecutor

log = logging.getLogger(__name__)

_T = typing.TypeVar("_T")
_R = typing.TypeVar("_R")


def resolve_threads(threads: int) -> int:
    """Number of workers for ``threads`` where ``0`` means one per CPU."""
    if threads < 0:
        raise ValueError(f"threads must be non-negative, got {threads!r}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def ordered_map(
    func: typing.Callable[[_T], _R],
    items: typing.Iterable[_T],
    threads: int = 1,
) -> list[_R]:
    """Apply ``func`` to every item, possibly in parallel.

    Results are always assembled in input order, so the output does not
    depend on the number of workers. The first exception raised by a worker
    propagates to the caller.
    """
    work = list(items)
    workers = min(resolve_threads(threads), max(len(work), 1))
    if workers == 1:
        return [func(item) for item in work]

    log.debug("Mapping %d items over %d threads", len(work), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, work))
