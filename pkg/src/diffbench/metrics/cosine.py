from __future__ import annotations

import numpy as np

from ..datastore import PairedSets
from ..errors import ZeroNormError


def paired_cosine(pairs: PairedSets) -> tuple[float, float, np.ndarray]:
    """Sample-wise cosine similarity between each candidate row and its paired reference row.

    Returns ``(mean, std, per_pair)``; ``std`` is the population standard deviation.
    """
    cand = pairs.candidate.data.astype(np.float64)
    ref = pairs.aligned_reference().astype(np.float64)
    cn = np.linalg.norm(cand, axis=1)
    rn = np.linalg.norm(ref, axis=1)
    for what, norms in (("candidate", cn), ("reference", rn)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            idx = int(zero[0]) if what == "candidate" else int(pairs.pairing[zero[0]])
            raise ZeroNormError(f"zero-norm {what} row {idx}", index=idx)
    per_pair = np.einsum("ij,ij->i", cand / cn[:, None], ref / rn[:, None])
    per_pair = np.clip(per_pair, -1.0, 1.0)
    return float(per_pair.mean()), float(per_pair.std()), per_pair
