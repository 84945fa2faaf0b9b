"""Blocked Euclidean distance kernels.

Squared distances come from the ||a||^2 + ||b||^2 - 2<a,b> expansion evaluated
in 1024 x 1024 tiles. Any decision that sits within the expansion's rounding
envelope is re-evaluated with the direct formula ``sqrt(sum((a - b)**2))`` so
that neighbour radii and manifold membership are exact.
"""

import numpy as np

BLOCK = 1024
_EPS = np.finfo(np.float64).eps


def as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def sq_norms(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def sq_dist_block(a, b, na, nb) -> np.ndarray:
    d2 = na[:, None] + nb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def slack(na, nb, dim) -> np.ndarray:
    """Upper bound on the absolute rounding error of the expansion."""
    return 8.0 * (dim + 4) * _EPS * (na[:, None] + nb[None, :]) + 1e-300


def exact_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance between matching rows of ``a`` and ``b``."""
    diff = a - b
    return np.sqrt((diff * diff).sum(-1))


def kth_neighbour_dist(x: np.ndarray, k: int, block: int = BLOCK) -> np.ndarray:
    """Distance from each row to its k-th nearest other row (1-based k)."""
    n, dim = x.shape
    norms = sq_norms(x)
    keep = min(n - 1, k + 16)
    radii = np.empty(n)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        rows = np.arange(i0, i1)
        best_d = np.full((i1 - i0, 0), np.inf)
        best_j = np.zeros((i1 - i0, 0), dtype=np.int64)
        for j0 in range(0, n, block):
            j1 = min(j0 + block, n)
            d2 = sq_dist_block(x[i0:i1], x[j0:j1], norms[i0:i1], norms[j0:j1])
            lo, hi = max(i0, j0), min(i1, j1)
            if lo < hi:
                idx = np.arange(lo, hi)
                d2[idx - i0, idx - j0] = np.inf
            cand_d = np.concatenate([best_d, d2], axis=1)
            cand_j = np.concatenate(
                [best_j, np.broadcast_to(np.arange(j0, j1), d2.shape)], axis=1
            )
            if cand_d.shape[1] > keep:
                part = np.argpartition(cand_d, keep - 1, axis=1)[:, :keep]
                cand_d = np.take_along_axis(cand_d, part, axis=1)
                cand_j = np.take_along_axis(cand_j, part, axis=1)
            best_d, best_j = cand_d, cand_j
        exact = exact_dist(x[rows][:, None, :], x[best_j])
        exact.sort(axis=1)
        r = exact[:, k - 1]
        # a row whose kept set might miss a closer point is recomputed in full
        margin = 8.0 * (dim + 4) * _EPS * (norms[rows] + norms.max())
        unsafe = best_d.max(axis=1) - margin <= r * r
        if keep < n - 1:
            for local in np.flatnonzero(unsafe):
                i = i0 + local
                d = exact_dist(x[i][None, :], x)
                d[i] = np.inf
                r[local] = np.partition(d, k - 1)[k - 1]
        radii[i0:i1] = r
    return radii


def within_any_ball(points: np.ndarray, centers: np.ndarray, radii: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """For each point: is there a center c with ||p - c|| <= radius[c]?"""
    n, dim = points.shape
    np_ = sq_norms(points)
    nc = sq_norms(centers)
    r2 = radii * radii
    inside = np.zeros(n, dtype=bool)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        hit = np.zeros(i1 - i0, dtype=bool)
        for j0 in range(0, centers.shape[0], block):
            j1 = min(j0 + block, centers.shape[0])
            d2 = sq_dist_block(points[i0:i1], centers[j0:j1], np_[i0:i1], nc[j0:j1])
            tol = slack(np_[i0:i1], nc[j0:j1], dim) + 4 * _EPS * r2[j0:j1][None, :]
            gap = d2 - r2[j0:j1][None, :]
            hit |= (gap < -tol).any(axis=1)
            amb_i, amb_j = np.nonzero(np.abs(gap) <= tol)
            keep = ~hit[amb_i]
            amb_i, amb_j = amb_i[keep], amb_j[keep]
            if amb_i.size:
                d = exact_dist(points[i0 + amb_i], centers[j0 + amb_j])
                ok = d <= radii[j0 + amb_j]
                hit[amb_i[ok]] = True
        inside[i0:i1] = hit
    return inside


def sq_dist_matrix(a: np.ndarray, b: np.ndarray, block: int = BLOCK) -> np.ndarray:
    na, nb = sq_norms(a), sq_norms(b)
    out = np.empty((a.shape[0], b.shape[0]))
    for i0 in range(0, a.shape[0], block):
        i1 = min(i0 + block, a.shape[0])
        for j0 in range(0, b.shape[0], block):
            j1 = min(j0 + block, b.shape[0])
            out[i0:i1, j0:j1] = sq_dist_block(a[i0:i1], b[j0:j1], na[i0:i1], nb[j0:j1])
    return out
