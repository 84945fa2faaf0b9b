# Train the toy latent interpolant and look at what the samplers do.
#
#     python3 demos/03_toy_interpolant.py [steps]
#
# The default 1500 steps take a couple of minutes on one core and already give
# a clear gap between the untrained and trained model. The acceptance suite
# uses 10k steps.

import sys
import time

import numpy as np
import torch

from diffbench.interpolant import (
    ModelConfig,
    SamplerConfig,
    TrainConfig,
    Trainer,
    generate,
    generate_toy_dataset,
    interpolate_condition,
    teacher_features,
    use_ema,
)
from diffbench.metrics import fd_between

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1500
N = 1000

# %% Data: 32x32 textures from four groups, split by pseudo-slide.
data = generate_toy_dataset(8000, seed=0)
print("groups:", data.manifest.groups())
print("splits:", {s: len(data.indices(s)) for s in ("train", "val_in", "val_out")})

# %% Model and trainer. The VAE, denoiser and alignment projector train together;
# the teacher is frozen and supplies both conditions and alignment targets.
cfg = TrainConfig(steps=steps, batch_size=64, lr=1e-3, ema_decay=0.999, log_every=500)
tr = Trainer.create(ModelConfig(), cfg, data)
print("trainable parameters:", tr.model.parameter_count())

reference = teacher_features(tr.model, torch.from_numpy(data.as_float(data.indices("val_out")[:N])), "val_out")
cond = tr.targets.pooled[np.random.default_rng(0).choice(data.indices("train"), N, replace=False)]


def fd(steps_, conditional=True):
    imgs = generate(tr.model, SamplerConfig(steps=steps_, seed=1), N, cond if conditional else None)
    return fd_between(teacher_features(tr.model, imgs, "gen"), reference)


print(f"FD before training: {fd(50, conditional=False):.4f}")

t0 = time.perf_counter()
for row in tr.train(steps)[:: max(steps // 6, 1)]:
    print(f"  step {row['step']:5d}  total {row['total']:.4f}  diffusion {row['diffusion']:.4f}  "
          f"align {row['alignment']:.4f}  recon {row['reconstruction']:.4f}")
print(f"trained {steps} steps in {time.perf_counter() - t0:.0f}s")

# %% Conditional against unconditional, and the step sweep, with EMA weights.
with use_ema(tr.model, tr.ema):
    print(f"unconditional, 50 steps: {fd(50, conditional=False):.4f}")
    for s in (20, 50, 250):
        print(f"conditional, {s:3d} steps: {fd(s):.4f}")

    # %% Walking between two conditions: lambda=0 and 1 reproduce the anchors.
    a, b = tr.targets.pooled[data.indices("train")[:2]]
    path = torch.stack([interpolate_condition(a, b, lam) for lam in np.linspace(0, 1, 5)])
    walk = generate(tr.model, SamplerConfig(steps=50, seed=7), 5, path)
    pooled, _ = tr.model.teacher(walk)
    print("teacher-space distance to anchor a along the walk:",
          [round(float((p - a).norm()), 3) for p in pooled])
