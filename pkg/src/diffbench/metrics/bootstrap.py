"""Subsample bootstrap of a metric over a generated pool.

Every replicate draws its rows from a Philox generator keyed on
``seed XOR replicate``, so replicate values do not depend on how replicates
are scheduled across worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..datastore import EmbeddingSet
from ..errors import DiffbenchError, ReplicateError, UsageError

DEFAULT_SUBSAMPLE = 50_000
DEFAULT_REPLICATES = 50


@dataclass(frozen=True)
class BootstrapSpec:
    subsample_size: int = DEFAULT_SUBSAMPLE
    replicates: int = DEFAULT_REPLICATES
    seed: int = 0

    def validate(self, pool_size: int) -> None:
        if self.replicates < 1:
            raise UsageError("replicates must be >= 1")
        if not 1 <= self.subsample_size <= pool_size:
            raise UsageError(
                f"subsample_size {self.subsample_size} must lie in [1, pool size {pool_size}]"
            )


def replicate_indices(pool_size: int, spec: BootstrapSpec, replicate: int) -> np.ndarray:
    key = (spec.seed ^ replicate) & (2**64 - 1)
    rng = np.random.Generator(np.random.Philox(key=key))
    idx = rng.choice(pool_size, size=spec.subsample_size, replace=False)
    idx.sort()
    return idx


def bootstrap(
    metric: Callable[[EmbeddingSet], float],
    pool: EmbeddingSet,
    spec: BootstrapSpec = BootstrapSpec(),
    threads: int = 1,
) -> tuple[float, float, np.ndarray]:
    """Evaluate ``metric`` on ``spec.replicates`` subsamples of ``pool``.

    ``metric`` receives the subsampled candidate set and is expected to close
    over the full, fixed reference set. Returns ``(mean, std, values)`` with the
    population standard deviation.
    """
    spec.validate(pool.rows)

    def run(r: int) -> float:
        subset = pool.take(replicate_indices(pool.rows, spec, r))
        try:
            value = float(metric(subset))
        except DiffbenchError as exc:
            raise ReplicateError(f"replicate {r}: {exc}", replicate=r) from exc
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise ReplicateError(f"replicate {r}: {exc}", replicate=r) from exc
        if not np.isfinite(value):
            raise ReplicateError(f"replicate {r}: metric returned {value}", replicate=r)
        return value

    if threads <= 1:
        values = [run(r) for r in range(spec.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            values = list(ex.map(run, range(spec.replicates)))
    values = np.array(values, dtype=np.float64)
    return float(values.mean()), float(values.std()), values
