"""
Process-pool map with index-ordered results.

Tasks must be picklable and their worker function defined at module level.
"""

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

log = logging.getLogger(__name__)


def resolve_jobs(jobs: Optional[int]) -> int:
    """Worker count: None or 0 means all cores but one."""
    if jobs is None or jobs == 0:
        return max(1, multiprocessing.cpu_count() - 1)
    return max(1, int(jobs))


def parallel_map(func: Callable[[T], R], tasks: Sequence[T], jobs: Optional[int] = 1) -> List[R]:
    """
    Apply func to every task, in worker processes when jobs > 1.

    Results are ordered by task index regardless of completion order.
    Worker exceptions propagate to the caller.
    """
    workers = resolve_jobs(jobs)
    if workers == 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    results: List[Optional[R]] = [None] * len(tasks)
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as executor:
        future_to_index = {
            executor.submit(func, task): i
            for i, task in enumerate(tasks)
        }
        completed = 0
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
            completed += 1
            if completed % max(1, len(tasks) // 10) == 0:
                log.debug("Progress: %d/%d tasks", completed, len(tasks))
    return results  # type: ignore[return-value]
