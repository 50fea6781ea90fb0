"""Trial Coordinator

Distributes independent Monte-Carlo batches over worker processes. Each batch
is keyed by (seed, trial indices) so results do not depend on how many workers
ran them; results always come back in task order.
"""

import asyncio
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)

WORKERS_ENV = "UWBSIM_WORKERS"


@dataclass
class BatchTask:
    """One unit of work for a worker"""
    task_kind: str
    payload: Any
    priority: int = 1


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "").strip()
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring non-integer {WORKERS_ENV}={value!r}")
    return 1


class TrialCoordinator:
    """
    Maps task kinds to module-level worker functions and runs batches of
    tasks either inline or on a process pool.
    """

    def __init__(self, handlers: Dict[str, Callable[[Any], Any]], workers: Optional[int] = None):
        self.handlers = dict(handlers)
        self.workers = default_workers() if workers is None else max(1, int(workers))
        logger.info(f"Trial coordinator ready with {self.workers} worker(s) "
                    f"for {len(self.handlers)} task kind(s)")

    def _handler_for(self, task: BatchTask) -> Callable[[Any], Any]:
        handler = self.handlers.get(task.task_kind)
        if handler is None:
            raise KeyError(f"No worker registered for task kind: {task.task_kind}")
        return handler

    async def _dispatch(self, tasks: List[BatchTask]) -> List[Any]:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [loop.run_in_executor(pool, self._handler_for(task), task.payload)
                       for task in tasks]
            return await asyncio.gather(*futures)

    def run(self, tasks: List[BatchTask]) -> List[Any]:
        """
        Process a list of tasks; the i-th result belongs to the i-th task
        """
        if not tasks:
            return []
        if self.workers <= 1 or len(tasks) == 1:
            return [self._handler_for(task)(task.payload) for task in tasks]
        try:
            results = asyncio.run(self._dispatch(tasks))
        except Exception as e:
            logger.error(f"Batch dispatch failed: {str(e)}")
            raise
        logger.debug(f"Completed {len(tasks)} batches on {self.workers} workers")
        return list(results)
