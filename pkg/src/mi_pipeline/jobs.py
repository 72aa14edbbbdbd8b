"""Worker-pool sizing and order-preserving parallel execution.

Parallelism degree resolves in precedence order: explicit request, the
MI_PIPELINE_JOBS environment variable, then the machine's physical core
count. Jobs must be independent; results come back in submission order so
callers stay deterministic regardless of completion order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import psutil

from .errors import ConfigError

JOBS_ENV_VAR = "MI_PIPELINE_JOBS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(requested: int | None = None) -> int:
    """Number of worker processes to use."""
    if requested is not None:
        if requested < 1:
            raise ConfigError(f"jobs must be >= 1, got {requested}")
        return requested
    env = os.environ.get(JOBS_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(
                f"{JOBS_ENV_VAR} must be an integer, got {env!r}"
            ) from None
        if value < 1:
            raise ConfigError(f"{JOBS_ENV_VAR} must be >= 1, got {value}")
        return value
    return psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], n_jobs: int
) -> list[R]:
    """Map ``fn`` over ``items``, preserving order; inline when n_jobs == 1.

    Worker processes pickle ``fn`` and each item, so both must be defined at
    module level.
    """
    work: Sequence[T] = list(items)
    if n_jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {n_jobs}")
    if n_jobs == 1 or len(work) <= 1:
        return [fn(item) for item in work]
    with ProcessPoolExecutor(max_workers=min(n_jobs, len(work))) as pool:
        return list(pool.map(fn, work))
