"""Euler ODE and Euler-Maruyama SDE samplers with interval classifier-free guidance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from ..errors import NumericError, UsageError
from .noise import chain_normals
from .path import DIFFUSION_SCHEDULES, diffusion_coeff, velocity_to_estimates

VelocityFn = Callable[[torch.Tensor, float], torch.Tensor]


@dataclass(frozen=True)
class SamplerConfig:
    scheme: str = "sde"
    steps: int = 250
    cfg_scale: float = 2.5
    guidance_low: float = 0.0
    guidance_high: float = 0.75
    diffusion_coeff: str = "t"
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("ode", "sde"):
            raise UsageError(f"scheme must be 'ode' or 'sde', got {self.scheme!r}")
        if self.steps < 1:
            raise UsageError("steps must be >= 1")
        if not 0.0 <= self.guidance_low <= self.guidance_high <= 1.0:
            raise UsageError("need 0 <= guidance_low <= guidance_high <= 1")
        if self.diffusion_coeff not in DIFFUSION_SCHEDULES:
            raise UsageError(f"unknown diffusion schedule {self.diffusion_coeff!r}")


def cfg_velocity(v_cond, v_uncond, t: float, cfg: SamplerConfig):
    # scale 1 returns v_cond untouched; the algebra would round
    if guidance_active(t, cfg):
        return v_uncond + cfg.cfg_scale * (v_cond - v_uncond)
    return v_cond


def guidance_active(t: float, cfg: SamplerConfig) -> bool:
    return cfg.cfg_scale != 1.0 and cfg.guidance_low <= t <= cfg.guidance_high


def interpolate_condition(c1, c2, lam: float):
    if not 0.0 <= lam <= 1.0:
        raise UsageError(f"interpolation factor must lie in [0, 1], got {lam}")
    if c1.shape != c2.shape:
        raise UsageError(f"condition shapes differ: {tuple(c1.shape)} vs {tuple(c2.shape)}")
    return (1 - lam) * c1 + lam * c2


def _noise(seed: int, n: int, step: int, shape, dtype, first_chain: int = 0) -> torch.Tensor:
    dim = int(np.prod(shape)) if len(shape) else 1
    z = chain_normals(seed, np.arange(first_chain, first_chain + n), step, dim)
    return torch.from_numpy(z).to(dtype).reshape(n, *shape)


def initial_noise(cfg: SamplerConfig, n: int, shape, dtype=torch.float64, first_chain: int = 0):
    # counter step 0 is the starting point; step k + 1 is the k-th injection
    return _noise(cfg.seed, n, 0, tuple(shape), dtype, first_chain)


def _check(x: torch.Tensor, step: int):
    if not torch.isfinite(x).all():
        raise NumericError(f"sampler state became non-finite at step {step}")


def sample_ode(velocity: VelocityFn, cfg: SamplerConfig, n: int, shape=(), dtype=torch.float64,
               x_init: torch.Tensor | None = None, first_chain: int = 0) -> torch.Tensor:
    """Euler integration of dx/dt = v from t = 1 down to t = 0."""
    x = initial_noise(cfg, n, shape, dtype, first_chain) if x_init is None else x_init.clone()
    h = 1.0 / cfg.steps
    for k in range(cfg.steps):
        t = 1.0 - k * h
        x = x - h * velocity(x, t)
        _check(x, k)
    return x


def sample_sde(velocity: VelocityFn, cfg: SamplerConfig, n: int, shape=(), dtype=torch.float64,
               x_init: torch.Tensor | None = None, first_chain: int = 0) -> torch.Tensor:
    """Euler-Maruyama on the reverse SDE; the last step injects no noise."""
    if cfg.steps < 2:
        raise UsageError("the SDE sampler needs at least 2 steps")
    x = initial_noise(cfg, n, shape, dtype, first_chain) if x_init is None else x_init.clone()
    h = 1.0 / cfg.steps
    for k in range(cfg.steps):
        t = 1.0 - k * h
        v = velocity(x, t)
        _, _, ws = velocity_to_estimates(x, v, t, cfg.diffusion_coeff)
        x = x - h * (v - ws)
        w = diffusion_coeff(cfg.diffusion_coeff, t)
        if k < cfg.steps - 1 and w > 0:
            x = x + np.sqrt(2 * h * w) * _noise(cfg.seed, n, k + 1, tuple(shape), dtype, first_chain)
        _check(x, k)
    return x


def sample(velocity: VelocityFn, cfg: SamplerConfig, n: int, shape=(), dtype=torch.float64,
           first_chain: int = 0) -> torch.Tensor:
    fn = sample_ode if cfg.scheme == "ode" else sample_sde
    return fn(velocity, cfg, n, shape, dtype, first_chain=first_chain)
