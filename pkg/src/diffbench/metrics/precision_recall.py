"""Improved precision/recall via k-NN manifold balls."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datastore import EmbeddingSet
from ..errors import UsageError
from ._distance import as_f64, kth_neighbour_dist, within_any_ball

DEFAULT_K = 3


@dataclass(frozen=True, eq=False)
class KnnRadii:
    k: int
    radii: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=np.float64)
        if radii.ndim != 1 or (radii < 0).any():
            raise UsageError("radii must be a 1-D array of non-negative distances")
        object.__setattr__(self, "radii", radii)


def _matrix(x) -> np.ndarray:
    return as_f64(x.data if isinstance(x, EmbeddingSet) else x)


def knn_radii(emb: EmbeddingSet | np.ndarray, k: int = DEFAULT_K) -> KnnRadii:
    """Exact distance from each row to its k-th nearest neighbour, self excluded."""
    x = _matrix(emb)
    if k < 1 or k >= x.shape[0]:
        raise UsageError(f"k must satisfy 1 <= k < N (k={k}, N={x.shape[0]})")
    return KnnRadii(k, kth_neighbour_dist(x, k))


def precision_recall(real, gen, k: int = DEFAULT_K) -> tuple[float, float]:
    """Fraction of generated rows inside the real manifold, and vice versa.

    A row is inside a manifold if it falls in some ball centred on a manifold
    row with that row's k-NN radius (boundary included).
    """
    r, g = _matrix(real), _matrix(gen)
    if r.shape[1] != g.shape[1]:
        raise UsageError(f"dimension mismatch: {r.shape[1]} vs {g.shape[1]}")
    if k < 1 or k >= min(r.shape[0], g.shape[0]):
        raise UsageError(f"k={k} too large for sets of {r.shape[0]} and {g.shape[0]} rows")
    real_radii = knn_radii(r, k).radii
    gen_radii = knn_radii(g, k).radii
    precision = within_any_ball(g, r, real_radii).mean()
    recall = within_any_ball(r, g, gen_radii).mean()
    return float(precision), float(recall)
