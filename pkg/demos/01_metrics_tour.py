# A walk through the evaluation metrics on synthetic embeddings.
#
#     python3 demos/01_metrics_tour.py
#
# Everything here runs in a few seconds on one core.

import numpy as np

from diffbench.datastore import EmbeddingSet, pair_by_id
from diffbench.metrics import BootstrapSpec, bootstrap, fd_between, fit_gaussian, fld, paired_cosine, precision_recall

rng = np.random.default_rng(0)

# %% Two known Gaussians. In 1-D, N(0, 1) against N(1, 4) has FD = 1 + 1 + 4 - 2*2 = 2.
real = EmbeddingSet(rng.standard_normal((20000, 1)), "demo", "real")
fake = EmbeddingSet(1.0 + 2.0 * rng.standard_normal((20000, 1)), "demo", "fake")
print("1-D FD, closed form 2.0:", round(fd_between(real, fake), 4))

g = fit_gaussian(real)
print("fitted mean / var:", g.mean.round(3), g.cov.round(3))

# %% FD only looks at the first two moments. A bimodal set with matching mean and
# variance scores almost as well as a faithful one.
x = rng.standard_normal((5000, 2))
signs = rng.choice([-1.0, 1.0], size=(5000, 2))
bimodal = signs * 0.99 + 0.141 * rng.standard_normal((5000, 2))
print("FD(faithful)  :", round(fd_between(EmbeddingSet(x, "d"), EmbeddingSet(rng.standard_normal((5000, 2)), "d")), 4))
print("FD(bimodal)   :", round(fd_between(EmbeddingSet(x, "d"), EmbeddingSet(bimodal, "d")), 4))

# %% Precision and recall separate the two failure modes that FD mixes:
# a collapsed generator keeps precision but loses recall.
collapsed = 0.3 * rng.standard_normal((2000, 2))
p, r = precision_recall(x[:2000], collapsed, k=3)
print(f"collapsed generator: precision {p:.3f}, recall {r:.3f}")
p, r = precision_recall(x[:2000], x[2000:4000] + 2.5, k=3)
print(f"shifted generator  : precision {p:.3f}, recall {r:.3f}")

# %% FLD rewards held-out likelihood and punishes copies of the training set.
fit, test, fresh = (rng.standard_normal((1000, 8)) for _ in range(3))
print("FLD fresh sample :", round(fld(fresh, fit, test), 3))
print("FLD shifted      :", round(fld(fresh + 1.0, fit, test), 3))
print("FLD memorised    :", round(fld(fit.copy(), fit, test), 3))

# %% Paired cosine similarity between a "real" tile embedding and the embedding of the
# tile generated from it. Pairing goes through tile ids, not row order.
ids = [f"tile-{i}" for i in range(500)]
ref = EmbeddingSet(rng.standard_normal((500, 16)), "demo", "real")
noisy = EmbeddingSet(ref.data[::-1] + 0.5 * rng.standard_normal((500, 16)), "demo", "generated")
mean, std, _ = paired_cosine(pair_by_id(ref, ids, noisy, ids[::-1]))
print(f"paired cosine: {mean:.3f} ± {std:.3f}")

# %% Bootstrap: subsample the generated pool without replacement, keep the reference fixed.
pool = EmbeddingSet(rng.standard_normal((6000, 4)) + 0.1, "demo", "pool")
ref4 = EmbeddingSet(rng.standard_normal((6000, 4)), "demo", "real")
mean, std, values = bootstrap(lambda c: fd_between(ref4, c), pool, BootstrapSpec(3000, 20, seed=1))
print(f"bootstrapped FD over 20 replicates: {mean:.4f} ± {std:.4f}")
