"""Desk-scale stochastic-interpolant engine: toy VAE, aligned denoiser, samplers."""

from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .data import ToyDataset, generate_toy_dataset, load_toy_dataset, save_toy_dataset
from .models import DenoiserModel, InterpolantModel, ModelConfig, TeacherExtractor, ToyVae, build_model
from .path import InterpolantState, gaussian_velocity, interpolate_forward, velocity_to_estimates
from .rig import (
    GuidedVelocity,
    TeacherTargets,
    Trainer,
    generate,
    load_model,
    restore_model,
    teacher_features,
    to_uint8,
    use_ema,
)
from .sampling import SamplerConfig, cfg_velocity, interpolate_condition, sample, sample_ode, sample_sde
from .training import (
    EmaShadow,
    StepDraws,
    TrainConfig,
    align_loss,
    compute_losses,
    ema_update,
    kl_divergence,
    live_parameters,
    train_step,
)

__all__ = [
    "Checkpoint", "read_checkpoint", "write_checkpoint",
    "ToyDataset", "generate_toy_dataset", "load_toy_dataset", "save_toy_dataset",
    "DenoiserModel", "InterpolantModel", "ModelConfig", "TeacherExtractor", "ToyVae", "build_model",
    "InterpolantState", "gaussian_velocity", "interpolate_forward", "velocity_to_estimates",
    "GuidedVelocity", "TeacherTargets", "Trainer", "generate", "load_model", "restore_model",
    "teacher_features", "to_uint8", "use_ema",
    "SamplerConfig", "cfg_velocity", "interpolate_condition", "sample", "sample_ode", "sample_sde",
    "EmaShadow", "StepDraws", "TrainConfig", "align_loss", "compute_losses", "ema_update",
    "kl_divergence", "live_parameters", "train_step",
]
