"""Joint VAE + denoiser training with representation alignment.

Gradient routing per step:

* diffusion MSE sees detached latents, so it only moves the denoiser;
* the alignment loss moves the denoiser (through the detached-latent pass)
  and the VAE encoder (through a second pass on live latents that reads the
  denoiser weights as constants), which equals the full gradient of the
  alignment term with respect to both networks;
* reconstruction and KL move the VAE only; the teacher has no parameters
  that can be updated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch.func import functional_call
from torch.nn import functional as F

from ..errors import NumericError, UsageError, ZeroNormError
from .models import InterpolantModel
from .path import interpolate_forward

LOSS_TERMS = ("diffusion", "alignment", "reconstruction", "kl")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 10000
    batch_size: int = 64
    lr: float = 2e-4
    align_weight: float = 0.5
    cond_drop: float = 0.1
    ema_decay: float = 0.9999
    kl_weight: float = 1e-4
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 100
    overfit_batch: int = 0  # > 0: reuse one fixed batch and fixed draws every step

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if not 0.0 <= self.cond_drop <= 1.0:
            raise UsageError("cond_drop must lie in [0, 1]")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise UsageError("ema_decay must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def align_loss(projected: torch.Tensor, teacher: torch.Tensor) -> torch.Tensor:
    """1 - mean cosine similarity between projected hidden tokens and teacher tokens.

    Both inputs are (..., tokens, D); the mean runs over every position.
    """
    if projected.shape != teacher.shape:
        raise UsageError(f"token shapes differ: {tuple(projected.shape)} vs {tuple(teacher.shape)}")
    pn = projected.norm(dim=-1)
    tn = teacher.norm(dim=-1)
    for what, norms in (("projected", pn), ("teacher", tn)):
        bad = torch.nonzero(norms == 0)
        if len(bad):
            raise ZeroNormError(f"zero-norm {what} token at position {bad[0].tolist()}", index=bad[0].tolist())
    cos = (projected * teacher.to(projected.dtype)).sum(-1) / (pn * tn.to(pn.dtype))
    return 1 - cos.mean()


def kl_divergence(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(q || N(0, I)) averaged over latent elements."""
    return 0.5 * (mean.pow(2) + logvar.exp() - 1 - logvar).mean()


@dataclass
class StepDraws:
    """All randomness one step consumes, drawn up front so the step is replayable."""

    t: torch.Tensor
    eps: torch.Tensor
    posterior: torch.Tensor
    drop: torch.Tensor

    @classmethod
    def draw(cls, seed: int, step: int, batch: int, latent_shape, p_drop: float, dtype=torch.float32):
        g = torch.Generator().manual_seed(_step_seed(seed, step))
        t = torch.rand(batch, generator=g, dtype=torch.float64).to(dtype)
        eps = torch.randn(batch, *latent_shape, generator=g, dtype=torch.float64).to(dtype)
        post = torch.randn(batch, *latent_shape, generator=g, dtype=torch.float64).to(dtype)
        drop = torch.rand(batch, generator=g, dtype=torch.float64) < p_drop
        return cls(t, eps, post, drop)


def _step_seed(seed: int, step: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, step, 0x5EED])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def compute_losses(model: InterpolantModel, images, cond, teacher_tokens, draws: StepDraws,
                   update_stats: bool = False) -> dict:
    """Forward both passes and return the routed loss pieces.

    Keys: diffusion, align_denoiser, align_vae, reconstruction, kl. The two
    align entries carry the same value; their graphs differ in which network
    they reach.
    """
    vae, den = model.vae, model.denoiser
    mean, logvar = vae.encode(images)
    z = mean + torch.exp(0.5 * logvar) * draws.posterior
    recon = vae.decode(z)
    if update_stats:
        model.latent_norm.update(z.detach())
    zn = model.latent_norm.normalize(z)

    state = interpolate_forward(zn.detach(), draws.eps, draws.t)
    v_pred, proj = den(state.x_t, draws.t, cond, draws.drop)
    diffusion = F.mse_loss(v_pred, state.velocity)
    align_den = align_loss(proj, teacher_tokens)

    frozen = {k: v.detach() for k, v in den.named_parameters()}
    frozen.update(dict(den.named_buffers()))
    live = interpolate_forward(zn, draws.eps, draws.t)
    _, proj_live = functional_call(den, frozen, (live.x_t, draws.t, cond, draws.drop), {"align_only": True})
    align_vae = align_loss(proj_live, teacher_tokens)

    return {
        "diffusion": diffusion,
        "align_denoiser": align_den,
        "align_vae": align_vae,
        "reconstruction": F.mse_loss(recon, images),
        "kl": kl_divergence(mean, logvar),
    }


def routed_total(losses: dict, align_weight: float, kl_weight: float) -> torch.Tensor:
    return (losses["diffusion"]
            + align_weight * (losses["align_denoiser"] + losses["align_vae"])
            + losses["reconstruction"]
            + kl_weight * losses["kl"])


def breakdown(losses: dict, align_weight: float, kl_weight: float) -> dict:
    out = {
        "diffusion": float(losses["diffusion"].detach()),
        "alignment": float(losses["align_denoiser"].detach()),
        "reconstruction": float(losses["reconstruction"].detach()),
        "kl": float(losses["kl"].detach()),
    }
    out["total"] = (out["diffusion"] + align_weight * out["alignment"]
                    + out["reconstruction"] + kl_weight * out["kl"])
    return out


class EmaShadow:
    """Shadow copies of the VAE and denoiser parameters, one shared decay."""

    def __init__(self, model: InterpolantModel, decay: float):
        if not 0.0 <= decay <= 1.0:
            raise UsageError("EMA decay must lie in [0, 1]")
        self.decay = decay
        self.params = {
            f"{part}.{name}": p.detach().clone()
            for part, module in model.trainable().items()
            for name, p in module.named_parameters()
        }

    def state_dict(self) -> dict:
        return dict(self.params)

    def load_state_dict(self, state: dict):
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise UsageError(f"EMA entry {k} does not match the model")
            self.params[k].copy_(v)


def live_parameters(model: InterpolantModel) -> dict:
    return {
        f"{part}.{name}": p
        for part, module in model.trainable().items()
        for name, p in module.named_parameters()
    }


@torch.no_grad()
def ema_update(shadow: EmaShadow, live: dict) -> EmaShadow:
    """shadow <- decay * shadow + (1 - decay) * live, for every tensor."""
    if live.keys() != shadow.params.keys():
        raise UsageError("live parameters and EMA shadow hold different tensors")
    d = shadow.decay
    for k, s in shadow.params.items():
        p = live[k]
        if p.shape != s.shape:
            raise UsageError(f"shape mismatch for {k}: {tuple(p.shape)} vs {tuple(s.shape)}")
        s.mul_(d).add_(p.detach().to(s.dtype), alpha=1 - d)
    return shadow


@torch.no_grad()
def swap_in(model: InterpolantModel, params: dict):
    """Copy a flat parameter dict (live or EMA) into the model; returns the old values."""
    live = live_parameters(model)
    old = {k: v.detach().clone() for k, v in live.items()}
    for k, v in params.items():
        live[k].copy_(v)
    return old


def make_optimizer(model: InterpolantModel, lr: float) -> torch.optim.Optimizer:
    params = [p for m in model.trainable().values() for p in m.parameters()]
    return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8)


def train_step(model: InterpolantModel, optimizer, ema: EmaShadow | None, batch: dict,
               draws: StepDraws, cfg: TrainConfig) -> dict:
    """One optimization step; returns the loss breakdown plus condition usage.

    ``batch`` holds ``images`` (B, 3, H, W) in [-1, 1], ``cond`` (B, D_c) and
    ``tokens`` (B, s*s, D_c), the teacher targets already resampled to the
    latent grid.
    """
    if batch["images"].shape[0] == 0:
        raise UsageError("empty batch")
    model.train()
    optimizer.zero_grad(set_to_none=True)
    losses = compute_losses(model, batch["images"], batch["cond"], batch["tokens"], draws, update_stats=True)
    for name, key in (("diffusion", "diffusion"), ("alignment", "align_denoiser"),
                      ("reconstruction", "reconstruction"), ("kl", "kl")):
        if not math.isfinite(float(losses[key].detach())):
            raise NumericError(f"non-finite {name} loss; step aborted")
    routed_total(losses, cfg.align_weight, cfg.kl_weight).backward()
    optimizer.step()
    if ema is not None:
        ema_update(ema, live_parameters(model))
    out = breakdown(losses, cfg.align_weight, cfg.kl_weight)
    out["cond_used"] = 1.0 - float(draws.drop.float().mean())
    return out
