"""Thread pool for stepping independent environment workers."""

import logging
from concurrent.futures import ThreadPoolExecutor

import psutil

from mackrl.utils.config_loader import worker_cap

logger = logging.getLogger(__name__)


def available_workers(requested, settings=None):
    """min(requested, CK_MACKRL_THREADS or settings cap, logical CPUs)"""
    cpus = psutil.cpu_count(logical=True) or 1
    limit = worker_cap(settings) or cpus
    return max(1, min(int(requested), limit, cpus))


class WorkerPool:
    """Runs one callable per environment worker and returns results in worker order

    Results never depend on the thread count: each task owns its environment
    and random stream, and the output order is the submission order.
    """

    def __init__(self, n_workers=1):
        self.n_workers = max(1, int(n_workers))
        self.executor = None

    def start(self):
        if self.executor is None and self.n_workers > 1:
            self.executor = ThreadPoolExecutor(max_workers=self.n_workers, thread_name_prefix="mackrl-env")
            logger.info(f"Worker pool started with {self.n_workers} threads")
        return self

    def stop(self):
        if self.executor is not None:
            self.executor.shutdown(wait=True)
            self.executor = None
            logger.info("Worker pool stopped")

    def __enter__(self):
        return self.start()

    def __exit__(self, exc_type, exc, tb):
        self.stop()
        return False

    def map(self, fn, tasks):
        """Results of ``fn`` over ``tasks`` in submission order"""
        tasks = list(tasks)
        if self.executor is None:
            return [fn(task) for task in tasks]
        return list(self.executor.map(fn, tasks))
