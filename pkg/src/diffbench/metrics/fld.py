"""Feature Likelihood Divergence.

Each generated row becomes the centre of an isotropic Gaussian component with
its own variance. Log-variances start at the squared distance to the nearest
fit-set row and are refined by gradient ascent on the mean log-likelihood of
the fit set. The score is the held-out NLL of that mixture minus the NLL of a
reference mixture centred on the fit set itself, divided by the dimension.

The reference mixture is built with the same budget but leaves each centre's
own row out of its initialisation and out of the fit likelihood; otherwise
every component would collapse onto the point it sits on.
"""

from __future__ import annotations

import numpy as np

from ..datastore import EmbeddingSet
from ..errors import NumericError, UsageError
from ._distance import as_f64, sq_dist_matrix

LOG_2PI = np.log(2.0 * np.pi)
VAR_FLOOR = 1e-6
STEPS = 100
STEP_SIZE = 0.5
ROW_BLOCK = 1024


def _component_logits(d2, log_var, dim):
    return -0.5 * d2 / np.exp(log_var)[None, :] - 0.5 * dim * (LOG_2PI + log_var)[None, :]


def _logsumexp_rows(chunks):
    """Streaming log-sum-exp over column chunks of a row block."""
    run_max = None
    run_sum = None
    for logits in chunks:
        m = logits.max(axis=1)
        if run_max is None:
            run_max = m
            run_sum = np.zeros_like(m)
        new_max = np.maximum(run_max, m)
        finite = np.isfinite(new_max)
        safe = np.where(finite, new_max, 0.0)
        run_sum = run_sum * np.exp(np.where(finite, run_max - safe, 0.0)) + np.exp(
            logits - safe[:, None]
        ).sum(axis=1)
        run_max = new_max
    return run_max + np.log(run_sum)


def fit_log_variances(centers, fit, *, leave_one_out=False, steps=STEPS, step_size=STEP_SIZE,
                      var_floor=VAR_FLOOR):
    """Per-component log-variances maximizing the mean log-likelihood of ``fit``.

    With ``leave_one_out`` the i-th fit row and the i-th centre are the same
    point and component i is excluded from row i's likelihood.
    """
    m, dim = centers.shape
    n = fit.shape[0]
    d2 = sq_dist_matrix(fit, centers)
    if leave_one_out:
        if n != m:
            raise UsageError("leave-one-out fitting needs centres and fit rows to coincide")
        np.fill_diagonal(d2, np.inf)
    log_floor = np.log(var_floor)
    nearest = d2.min(axis=0)
    log_var = np.log(np.maximum(nearest, var_floor))
    for _ in range(steps):
        grad = np.zeros(m)
        inv_two_var = 0.5 / np.exp(log_var)
        for i0 in range(0, n, ROW_BLOCK):
            block = d2[i0:i0 + ROW_BLOCK]
            logits = _component_logits(block, log_var, dim)
            lse = _logsumexp_rows([logits])
            resp = np.exp(logits - lse[:, None])
            with np.errstate(invalid="ignore"):
                term = block * inv_two_var[None, :] - 0.5 * dim
            term[~np.isfinite(block)] = 0.0
            grad += (resp * term).sum(axis=0)
        grad /= n
        log_var = np.maximum(log_var + step_size * grad, log_floor)
    if not np.isfinite(log_var).all():
        raise NumericError("FLD variance optimization produced non-finite values")
    return log_var


def mixture_nll(centers, log_var, test, block=ROW_BLOCK) -> float:
    """Mean negative log-likelihood of ``test`` under the uniform isotropic mixture."""
    m, dim = centers.shape
    total = 0.0
    for i0 in range(0, test.shape[0], block):
        rows = test[i0:i0 + block]

        def chunks():
            for j0 in range(0, m, block):
                d2 = sq_dist_matrix(rows, centers[j0:j0 + block])
                yield _component_logits(d2, log_var[j0:j0 + block], dim)

        total += _logsumexp_rows(chunks()).sum()
    nll = -(total / test.shape[0] - np.log(m))
    if not np.isfinite(nll):
        raise NumericError("FLD likelihood is not finite")
    return float(nll)


def fld(gen, real_fit, real_test, *, steps=STEPS, step_size=STEP_SIZE) -> float:
    """Feature Likelihood Divergence of ``gen`` (lower is better, ~0 when ideal)."""
    g, f, t = (as_f64(x.data if isinstance(x, EmbeddingSet) else x) for x in (gen, real_fit, real_test))
    if not (g.shape[1] == f.shape[1] == t.shape[1]):
        raise UsageError("FLD inputs must share one dimension")
    if min(g.shape[0], f.shape[0], t.shape[0]) < 2:
        raise UsageError("every FLD input needs at least 2 rows")
    dim = g.shape[1]
    gen_log_var = fit_log_variances(g, f, steps=steps, step_size=step_size)
    ref_log_var = fit_log_variances(f, f, leave_one_out=True, steps=steps, step_size=step_size)
    nll_gen = mixture_nll(g, gen_log_var, t)
    nll_ref = mixture_nll(f, ref_log_var, t)
    return (nll_gen - nll_ref) / dim
