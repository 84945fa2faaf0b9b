"""Gaussian fits, PSD square roots and the Frechet distance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..datastore import EmbeddingSet
from ..errors import NumericError, UsageError

COV_DDOF = 1
SYMMETRY_RTOL = 1e-10
CLAMP_TOL = 1e-6


class NegativeEigenvalueWarning(RuntimeWarning):
    """An eigenvalue clamp larger than ``CLAMP_TOL * lambda_max`` happened."""


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise UsageError(f"mean/cov shapes disagree: {mean.shape} vs {cov.shape}")
        if self.n < 2:
            raise UsageError("a Gaussian summary needs n >= 2")
        _check_symmetric(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _check_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    scale = max(np.abs(m).max(initial=0.0), 1e-300)
    asym = np.abs(m - m.T).max(initial=0.0)
    if asym > rtol * scale:
        raise UsageError(f"matrix is not symmetric (max |m - m.T| = {asym:.3g})")


def fit_gaussian(emb: EmbeddingSet | np.ndarray) -> GaussianSummary:
    """Column mean and unbiased covariance, symmetrized as (C + C.T) / 2."""
    x = emb.data if isinstance(emb, EmbeddingSet) else np.asarray(emb)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise UsageError("expected an N x D matrix")
    if x.shape[0] < 2:
        raise UsageError(f"need at least 2 rows to fit a Gaussian, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise NumericError("non-finite values in input")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - COV_DDOF)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean, cov, x.shape[0])


def _clamped_eigh(m: np.ndarray, what: str):
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition of {what} failed: {exc}") from exc
    lam_max = max(vals.max(initial=0.0), 0.0)
    if vals.size and vals.min() < -CLAMP_TOL * lam_max:
        warnings.warn(
            f"{what}: eigenvalue {vals.min():.3g} below -{CLAMP_TOL:g} * lambda_max ({lam_max:.3g}) clamped to 0",
            NegativeEigenvalueWarning,
            stacklevel=3,
        )
    return np.clip(vals, 0.0, None), vecs


def sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; negative eigenvalues clamp to 0."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UsageError(f"expected a square matrix, got {m.shape}")
    _check_symmetric(m)
    vals, vecs = _clamped_eigh(0.5 * (m + m.T), "sqrtm input")
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T)


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """||mu_a - mu_b||^2 + tr(S_a) + tr(S_b) - 2 tr((S_a^1/2 S_b S_a^1/2)^1/2).

    The symmetric inner product keeps every intermediate real and PSD.
    """
    if a.dim != b.dim:
        raise UsageError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = sqrtm_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    inner = 0.5 * (inner + inner.T)
    vals, _ = _clamped_eigh(inner, "FD cross term")
    cross = np.sqrt(vals).sum()
    fd = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross)
    if fd < 0.0:
        if fd < -1e-6:
            raise NumericError(f"Frechet distance came out negative ({fd:.3g})")
        fd = 0.0
    return fd


def fd_between(x: EmbeddingSet, y: EmbeddingSet) -> float:
    return frechet_distance(fit_gaussian(x), fit_gaussian(y))
