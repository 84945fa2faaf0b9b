"""Training loop, guided generation and teacher-feature evaluation for the toy rig."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .. import __version__
from ..datastore import EmbeddingSet
from ..errors import NumericError, UsageError
from .checkpoint import (
    Checkpoint,
    load_optimizer_tensors,
    optimizer_tensors,
    read_checkpoint,
    to_numpy,
    write_checkpoint,
)
from .data import ToyDataset
from .models import InterpolantModel, ModelConfig, build_model
from .sampling import SamplerConfig, guidance_active, sample
from .training import (
    EmaShadow,
    StepDraws,
    TrainConfig,
    live_parameters,
    make_optimizer,
    swap_in,
    train_step,
)

log = logging.getLogger(__name__)


@dataclass
class TeacherTargets:
    """Teacher outputs for every dataset image, computed once."""

    pooled: torch.Tensor  # (n, D_c)
    tokens: torch.Tensor  # (n, s*s, D_c), resampled to the latent grid

    @classmethod
    def compute(cls, model: InterpolantModel, data: ToyDataset, chunk: int = 2048) -> "TeacherTargets":
        pooled, tokens = [], []
        side = model.cfg.latent_side
        for lo in range(0, len(data), chunk):
            x = torch.from_numpy(data.as_float(np.arange(lo, min(lo + chunk, len(data)))))
            p, _ = model.teacher(x)
            pooled.append(p)
            tokens.append(model.teacher.align_targets(x, side).float())
        return cls(torch.cat(pooled), torch.cat(tokens))


def batch_indices(pool: np.ndarray, seed: int, step: int, batch_size: int) -> np.ndarray:
    """Stateless batch choice, so resuming at step k replays step k exactly."""
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, step]))
    return pool[rng.choice(len(pool), size=batch_size, replace=len(pool) < batch_size)]


@dataclass
class Trainer:
    model: InterpolantModel
    cfg: TrainConfig
    data: ToyDataset
    targets: TeacherTargets
    pool: np.ndarray
    optimizer: torch.optim.Optimizer = None
    ema: EmaShadow = None
    step: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, model_cfg: ModelConfig, cfg: TrainConfig, data: ToyDataset, splits=("train",)):
        model = build_model(model_cfg, cfg.seed)
        targets = TeacherTargets.compute(model, data)
        pool = data.indices(*splits)
        if len(pool) == 0:
            raise UsageError(f"no training images in splits {splits}")
        tr = cls(model, cfg, data, targets, pool)
        tr.optimizer = make_optimizer(model, cfg.lr)
        tr.ema = EmaShadow(model, cfg.ema_decay)
        return tr

    def batch(self, step: int) -> dict:
        if self.cfg.overfit_batch:
            idx = np.resize(self.pool[:self.cfg.overfit_batch], self.cfg.batch_size)
        else:
            idx = batch_indices(self.pool, self.cfg.seed, step, self.cfg.batch_size)
        return {
            "images": torch.from_numpy(self.data.as_float(idx)),
            "cond": self.targets.pooled[idx],
            "tokens": self.targets.tokens[idx],
            "index": idx,
        }

    def run_step(self) -> dict:
        b = self.batch(self.step)
        side = self.model.cfg.latent_side
        draw_step = 0 if self.cfg.overfit_batch else self.step
        draws = StepDraws.draw(self.cfg.seed, draw_step, len(b["index"]),
                               (self.model.cfg.latent_channels, side, side), self.cfg.cond_drop)
        out = train_step(self.model, self.optimizer, self.ema, b, draws, self.cfg)
        self.step += 1
        out["step"] = self.step
        self.history.append(out)
        return out

    def train(self, steps: int, callback=None) -> list:
        start = time.perf_counter()
        for _ in range(steps):
            out = self.run_step()
            if callback is not None:
                callback(self, out)
            if self.step % max(self.cfg.log_every, 1) == 0:
                log.info("step %d total %.4f diff %.4f align %.4f recon %.4f (%.1fs)", self.step,
                         out["total"], out["diffusion"], out["alignment"], out["reconstruction"],
                         time.perf_counter() - start)
        return self.history

    def save(self, path, extra: dict | None = None) -> int:
        names = list(live_parameters(self.model))
        opt_tensors, opt_steps = optimizer_tensors(self.optimizer, names)
        tensors = {f"live/{k}": to_numpy(v) for k, v in live_parameters(self.model).items()}
        tensors.update({f"ema/{k}": to_numpy(v) for k, v in self.ema.params.items()})
        tensors.update({f"buffer/latent_norm.{k}": to_numpy(v) for k, v in self.model.latent_norm.named_buffers()})
        tensors.update({f"optim/{k}": v for k, v in opt_tensors.items()})
        meta = {
            "kind": "diffbench-interpolant",
            "tool_version": __version__,
            "model": self.model.cfg.to_dict(),
            "train": self.cfg.to_dict(),
            "step": self.step,
            "optim_steps": opt_steps,
            "extra": extra or {},
        }
        return write_checkpoint(Checkpoint(meta, tensors), path)

    @classmethod
    def resume(cls, path, data: ToyDataset, splits=("train",), cfg: TrainConfig | None = None) -> "Trainer":
        ckpt = read_checkpoint(path)
        saved_cfg = TrainConfig(**ckpt.meta["train"])
        tr = cls.create(ModelConfig.from_dict(ckpt.meta["model"]), cfg or saved_cfg, data, splits)
        restore_model(tr.model, tr.ema, ckpt)
        names = list(live_parameters(tr.model))
        load_optimizer_tensors(tr.optimizer, names, ckpt.group("optim"), ckpt.meta["optim_steps"])
        tr.step = int(ckpt.meta["step"])
        return tr


def restore_model(model: InterpolantModel, ema: EmaShadow | None, ckpt: Checkpoint):
    live = live_parameters(model)
    stored = ckpt.group("live")
    if set(stored) != set(live):
        raise UsageError("checkpoint parameters do not match the configured model")
    with torch.no_grad():
        for k, p in live.items():
            if tuple(stored[k].shape) != tuple(p.shape):
                raise UsageError(f"checkpoint tensor {k} has shape {stored[k].shape}, model wants {tuple(p.shape)}")
            p.copy_(torch.from_numpy(stored[k].copy()))
        for k, b in model.latent_norm.named_buffers():
            b.copy_(torch.from_numpy(ckpt.group("buffer")[f"latent_norm.{k}"].copy()).to(b.dtype))
    if ema is not None:
        ema.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in ckpt.group("ema").items()})


def load_model(path) -> tuple[InterpolantModel, EmaShadow, dict]:
    """Model with live weights loaded, its EMA shadow, and the checkpoint metadata."""
    ckpt = read_checkpoint(path)
    if ckpt.meta.get("kind") != "diffbench-interpolant":
        raise UsageError(f"{path} is not an interpolant checkpoint")
    model = build_model(ModelConfig.from_dict(ckpt.meta["model"]))
    ema = EmaShadow(model, ckpt.meta["train"]["ema_decay"])
    restore_model(model, ema, ckpt)
    return model, ema, ckpt.meta


class GuidedVelocity:
    """Velocity callable for the samplers, with interval CFG."""

    def __init__(self, denoiser, cond: torch.Tensor | None, cfg: SamplerConfig):
        self.den = denoiser
        self.cond = cond
        self.cfg = cfg

    @torch.no_grad()
    def __call__(self, x, t: float):
        tt = torch.full((len(x),), t, dtype=x.dtype)
        if self.cond is None:
            return self.den(x, tt, None)[0]
        if not guidance_active(t, self.cfg):
            return self.den(x, tt, self.cond)[0]
        # conditional and unconditional halves in one batch
        both = self.den(torch.cat([x, x]), torch.cat([tt, tt]),
                        torch.cat([self.cond, self.cond]),
                        torch.cat([torch.zeros(len(x), dtype=torch.bool), torch.ones(len(x), dtype=torch.bool)]))[0]
        v_cond, v_uncond = both.chunk(2)
        return v_uncond + self.cfg.cfg_scale * (v_cond - v_uncond)


@torch.no_grad()
def generate(model: InterpolantModel, cfg: SamplerConfig, n: int, cond: torch.Tensor | None = None,
             batch: int = 1000) -> torch.Tensor:
    """Sample n images (n, 3, H, W) in [-1, 1]; chain i always gets the same noise."""
    if cond is not None and len(cond) != n:
        raise UsageError("need one condition per sample")
    model.eval()
    c, s = model.cfg.latent_channels, model.cfg.latent_side
    out = []
    for lo in range(0, n, batch):
        hi = min(lo + batch, n)
        vel = GuidedVelocity(model.denoiser, None if cond is None else cond[lo:hi].float(), cfg)
        zn = sample(vel, cfg, hi - lo, (c, s, s), dtype=torch.float32, first_chain=lo)
        out.append(model.vae.decode(model.latent_norm.denormalize(zn)).clamp(-1, 1))
    imgs = torch.cat(out)
    if not torch.isfinite(imgs).all():
        raise NumericError("generated images contain non-finite values")
    return imgs


def to_uint8(images: torch.Tensor) -> np.ndarray:
    """(n, 3, H, W) in [-1, 1] -> (n, H, W, 3) uint8."""
    arr = ((images.permute(0, 2, 3, 1).numpy().astype(np.float64) + 1.0) * 127.5)
    return np.clip(np.sign(arr) * np.floor(np.abs(arr) + 0.5), 0, 255).astype(np.uint8)


@torch.no_grad()
def teacher_features(model: InterpolantModel, images: torch.Tensor, tag: str, chunk: int = 4096) -> EmbeddingSet:
    feats = [model.teacher(images[lo:lo + chunk])[0] for lo in range(0, len(images), chunk)]
    return EmbeddingSet(torch.cat(feats).numpy(), extractor_id="toy-teacher", source_tag=tag)


class use_ema:
    """Context manager that swaps EMA weights into the model temporarily."""

    def __init__(self, model: InterpolantModel, ema: EmaShadow | None, enabled: bool = True):
        self.model, self.ema, self.enabled = model, ema, enabled and ema is not None
        self.saved = None

    def __enter__(self):
        if self.enabled:
            self.saved = swap_in(self.model, self.ema.params)
        return self.model

    def __exit__(self, *exc):
        if self.enabled:
            swap_in(self.model, self.saved)
        return False


__all__ = ["TeacherTargets", "Trainer", "GuidedVelocity", "generate", "teacher_features", "to_uint8",
           "use_ema", "batch_indices", "live_parameters", "load_model", "restore_model"]
