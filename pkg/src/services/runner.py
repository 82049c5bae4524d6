"""Replica scheduling over a process pool.

A task is a module-level callable ``task(payload, replica) -> result``; it must
derive all randomness from ``ReplicaStreams(seed, experiment, replica)`` so the
result of a replica does not depend on which worker ran it.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar
import logging

logger = logging.getLogger(__name__)

T = TypeVar("T")
ReplicaTask = Callable[[Any, int], T]
ProgressHook = Callable[[int, int], None]


def run_replicas(
    task: ReplicaTask[T],
    payload: Any,
    n: int,
    workers: int = 1,
    replicas: Optional[Sequence[int]] = None,
    on_progress: Optional[ProgressHook] = None,
) -> List[T]:
    """Run ``task`` for every replica and return the results in replica order.

    Args:
        task: Picklable callable taking ``(payload, replica)``.
        payload: Read-only argument shared by all replicas.
        n: Replica count; ignored when ``replicas`` is given.
        workers: Process count. 1 runs inline in the calling process.
        replicas: Explicit replica indices, e.g. to rerun a subset.
        on_progress: Called as ``on_progress(done, total)`` after each replica.

    Returns:
        list: One result per replica, sorted by replica index.

    Raises:
        Whatever the first failing replica raised; outstanding replicas are cancelled.
    """
    indices = list(range(n)) if replicas is None else sorted(int(r) for r in replicas)
    total = len(indices)
    results: Dict[int, T] = {}
    if workers <= 1 or total <= 1:
        for done, r in enumerate(indices, start=1):
            results[r] = task(payload, r)
            if on_progress is not None:
                on_progress(done, total)
        return [results[r] for r in indices]

    logger.debug("scheduling %d replicas on %d workers", total, workers)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = {ex.submit(task, payload, r): r for r in indices}
        try:
            for fut in as_completed(futures):
                results[futures[fut]] = fut.result()
                if on_progress is not None:
                    on_progress(len(results), total)
        except BaseException:
            for fut in futures:
                fut.cancel()
            raise
    return [results[r] for r in indices]


__all__ = ["run_replicas", "ReplicaTask"]
