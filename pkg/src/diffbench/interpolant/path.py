"""Linear interpolant x_t = (1 - t) x0 + t eps, with t = 0 data and t = 1 noise."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import UsageError

DIFFUSION_SCHEDULES = ("zero", "t", "t(1-t)")


@dataclass(frozen=True)
class InterpolantState:
    x_t: torch.Tensor
    t: float | torch.Tensor
    velocity: torch.Tensor


def _check_t(t):
    tt = torch.as_tensor(t)
    if not bool(((tt >= 0) & (tt <= 1)).all()):
        raise UsageError(f"t must lie in [0, 1], got {t}")


def _broadcast_t(t, like: torch.Tensor):
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        return t.to(like.dtype).reshape(-1, *([1] * (like.ndim - 1)))
    return float(t)


def interpolate_forward(x0: torch.Tensor, eps: torch.Tensor, t) -> InterpolantState:
    """t may be a scalar or a per-sample vector along the first axis."""
    if x0.shape != eps.shape:
        raise UsageError(f"x0 and eps shapes differ: {tuple(x0.shape)} vs {tuple(eps.shape)}")
    _check_t(t)
    tb = _broadcast_t(t, x0)
    return InterpolantState((1 - tb) * x0 + tb * eps, t, eps - x0)


def velocity_to_estimates(x_t: torch.Tensor, v: torch.Tensor, t, schedule: str = "t"):
    """Invert the path: returns (x0_hat, eps_hat, w(t) * score).

    The score of the linear path is -eps_hat / t, so every supported w(t)
    has a factor t that cancels and the result stays finite at t = 0.
    """
    if x_t.shape != v.shape:
        raise UsageError(f"x_t and v shapes differ: {tuple(x_t.shape)} vs {tuple(v.shape)}")
    _check_t(t)
    tb = _broadcast_t(t, x_t)
    x0_hat = x_t - tb * v
    eps_hat = x_t + (1 - tb) * v
    if schedule == "t":
        weighted = -eps_hat
    elif schedule == "t(1-t)":
        weighted = -(1 - tb) * eps_hat
    elif schedule == "zero":
        weighted = torch.zeros_like(eps_hat)
    else:
        raise UsageError(f"unknown diffusion schedule {schedule!r}; use one of {DIFFUSION_SCHEDULES}")
    return x0_hat, eps_hat, weighted


def diffusion_coeff(schedule: str, t: float) -> float:
    if schedule == "t":
        return t
    if schedule == "t(1-t)":
        return t * (1 - t)
    if schedule == "zero":
        return 0.0
    raise UsageError(f"unknown diffusion schedule {schedule!r}; use one of {DIFFUSION_SCHEDULES}")


def gaussian_velocity(x: torch.Tensor, t: float) -> torch.Tensor:
    """Optimal velocity when the data are standard normal in every coordinate."""
    return (2 * t - 1) / ((1 - t) ** 2 + t ** 2) * x
