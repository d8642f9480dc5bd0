import logging
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from functools import partial
from typing import Any, Callable, List, NamedTuple, Optional, Protocol, Sequence

import numpy as np

from ltcinfer.core.config import settings
from ltcinfer.core.exceptions import NumericalError

logger = logging.getLogger(__name__)


class GradientTarget(Protocol):
    def log_likelihood_and_gradient(self, x: np.ndarray):
        ...

    def log_prior_and_gradient(self, x: np.ndarray):
        ...


class GradientBatch(NamedTuple):
    log_likelihood: np.ndarray
    likelihood_gradients: np.ndarray
    prior_gradients: np.ndarray
    degenerate: np.ndarray

    @property
    def posterior_gradients(self) -> np.ndarray:
        return self.likelihood_gradients + self.prior_gradients

    @property
    def n_degenerate(self) -> int:
        return int(np.sum(self.degenerate))


def _map_chunk(fn: Callable, items: Sequence) -> List:
    return [fn(item) for item in items]


def _particle_gradients(target: GradientTarget, x: np.ndarray):
    _, prior_gradient = target.log_prior_and_gradient(x)
    try:
        value, gradient = target.log_likelihood_and_gradient(x)
    except NumericalError as exc:
        logger.debug(f"Particle degenerate: {exc}")
        return -np.inf, np.zeros_like(x), prior_gradient, True
    return value, gradient, prior_gradient, False


class WorkerPool:
    """K workers, each owning a contiguous block of the items handed to ``map``.

    Results are gathered in item order whatever the worker count.
    """

    def __init__(self, n_workers: Optional[int] = None, executor: Optional[str] = None):
        self.n_workers = n_workers or settings.DEFAULT_WORKERS
        self.kind = executor or settings.EXECUTOR
        self._executor: Optional[Executor] = None
        if self.n_workers > 1:
            if self.kind == "process":
                self._executor = ProcessPoolExecutor(max_workers=self.n_workers)
            else:
                self._executor = ThreadPoolExecutor(max_workers=self.n_workers)
        logger.debug(f"Started {self.n_workers} {self.kind} workers")

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc_info):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def chunks(self, n_items: int) -> List[np.ndarray]:
        return np.array_split(np.arange(n_items), self.n_workers)

    def map(self, fn: Callable[[Any], Any], items: Sequence) -> List:
        items = list(items)
        if self._executor is None:
            return _map_chunk(fn, items)
        futures = [
            self._executor.submit(_map_chunk, fn, [items[i] for i in chunk])
            for chunk in self.chunks(len(items))
        ]
        results = []
        for future in futures:
            results.extend(future.result())
        return results

    def gradients(self, target: GradientTarget, particles: np.ndarray) -> GradientBatch:
        """Likelihood and prior gradients of every particle; divergent particles are flagged"""
        rows = self.map(partial(_particle_gradients, target), list(particles))
        values, likelihood, prior, degenerate = zip(*rows)
        return GradientBatch(
            log_likelihood=np.array(values),
            likelihood_gradients=np.array(likelihood),
            prior_gradients=np.array(prior),
            degenerate=np.array(degenerate, dtype=bool),
        )
