"""Desk-scale networks: convolutional VAE, frozen patch teacher, adaLN token denoiser.

Smooth activations (SiLU, tanh) are used throughout so finite-difference
gradient checks are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

from ..errors import UsageError
from ..preprocess.resample import resize_tokens


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    latent_channels: int = 4
    vae_channels: tuple = (16, 32)
    teacher_patch: int = 4
    teacher_dim: int = 16
    teacher_hidden: int = 48
    teacher_seed: int = 1234
    hidden: int = 48
    heads: int = 4
    depth: int = 2
    mlp_ratio: int = 2
    align_depth: int = 1
    projector_hidden: int = 48
    time_freqs: int = 32

    def __post_init__(self):
        if self.image_size % 8:
            raise UsageError("image_size must be a multiple of 8 (f8 VAE)")
        if self.image_size % self.teacher_patch:
            raise UsageError("teacher_patch must divide image_size")
        if self.hidden % self.heads:
            raise UsageError("hidden must be divisible by heads")
        if not 1 <= self.align_depth <= self.depth:
            raise UsageError("align_depth must lie in 1..depth")

    @property
    def latent_side(self) -> int:
        return self.image_size // 8

    @property
    def teacher_side(self) -> int:
        return self.image_size // self.teacher_patch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vae_channels"] = list(self.vae_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "vae_channels" in d:
            d["vae_channels"] = tuple(d["vae_channels"])
        return cls(**d)


class ToyVae(nn.Module):
    """f8 VAE: three stride-2 stages down, three nearest-upsample stages up."""

    downsample_factor = 8

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c1, c2 = cfg.vae_channels
        zc = cfg.latent_channels
        self.latent_channels = zc
        self.encoder = nn.Sequential(
            nn.Conv2d(3, c1, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c2, c2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(c2, 2 * zc, 1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(zc, c2, 3, padding=1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c2, c2, 3, padding=1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c2, c1, 3, padding=1), nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c1, 3, 3, padding=1),
        )

    def encode(self, x):
        """Returns posterior (mean, log-variance), each (B, zc, H/8, W/8)."""
        h = self.encoder(x)
        mean, logvar = h.chunk(2, dim=1)
        return mean, logvar.clamp(-30.0, 20.0)

    def decode(self, z):
        return torch.tanh(self.decoder(z))


class TeacherExtractor(nn.Module):
    """Frozen random patch MLP standing in for a pretrained ViT.

    Images are cut into non-overlapping patches, each patch is embedded by a
    two-layer tanh MLP, and the pooled token is the mean of the patch tokens.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.patch = cfg.teacher_patch
        g = torch.Generator().manual_seed(cfg.teacher_seed)
        d_in = 3 * cfg.teacher_patch ** 2
        w1 = torch.randn(d_in, cfg.teacher_hidden, generator=g) * (2.0 / d_in) ** 0.5
        b1 = torch.randn(cfg.teacher_hidden, generator=g) * 0.1
        w2 = torch.randn(cfg.teacher_hidden, cfg.teacher_dim, generator=g) * (1.0 / cfg.teacher_hidden) ** 0.5
        for name, value in (("w1", w1), ("b1", b1), ("w2", w2)):
            self.register_buffer(name, value)
        self.requires_grad_(False)

    @torch.no_grad()
    def forward(self, x):
        """x: (B, 3, H, W) in [-1, 1] -> (pooled (B, D), tokens (B, g, g, D))."""
        b, c, h, w = x.shape
        p = self.patch
        patches = x.reshape(b, c, h // p, p, w // p, p).permute(0, 2, 4, 1, 3, 5)
        patches = patches.reshape(b, h // p, w // p, c * p * p).to(self.w1.dtype)
        tokens = torch.tanh(patches @ self.w1 + self.b1) @ self.w2
        return tokens.mean(dim=(1, 2)), tokens

    def align_targets(self, x, side: int) -> torch.Tensor:
        """Patch tokens resampled to ``side x side`` and flattened to (B, side^2, D)."""
        _, tokens = self(x)
        grid = resize_tokens(tokens.double().numpy(), side)
        return torch.from_numpy(grid).reshape(len(x), side * side, -1)


def sincos_2d(side: int, dim: int) -> torch.Tensor:
    """Fixed 2-D sine-cosine position table, (side^2, dim)."""
    quarter = dim // 4
    omega = 1.0 / 10000 ** (torch.arange(quarter, dtype=torch.float64) / max(quarter, 1))
    ys, xs = torch.meshgrid(torch.arange(side, dtype=torch.float64), torch.arange(side, dtype=torch.float64),
                            indexing="ij")
    parts = []
    for coord in (ys.reshape(-1), xs.reshape(-1)):
        arg = coord[:, None] * omega[None, :]
        parts += [torch.sin(arg), torch.cos(arg)]
    table = torch.cat(parts, dim=1)
    return F.pad(table, (0, dim - table.shape[1])).float()


def time_features(t: torch.Tensor, freqs: int) -> torch.Tensor:
    half = freqs // 2
    scale = torch.exp(-math.log(1000.0) * torch.arange(half, dtype=t.dtype) / half)
    arg = 1000.0 * t[:, None] * scale[None, :]
    return torch.cat([torch.cos(arg), torch.sin(arg)], dim=1)


def modulate(x, shift, scale):
    return x * (1 + scale[:, None, :]) + shift[:, None, :]


class Block(nn.Module):
    def __init__(self, hidden: int, heads: int, mlp_ratio: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(hidden, elementwise_affine=False, eps=1e-6)
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.proj = nn.Linear(hidden, hidden)
        self.norm2 = nn.LayerNorm(hidden, elementwise_affine=False, eps=1e-6)
        self.mlp = nn.Sequential(nn.Linear(hidden, mlp_ratio * hidden), nn.SiLU(), nn.Linear(mlp_ratio * hidden, hidden))
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(hidden, 6 * hidden))
        nn.init.zeros_(self.ada[1].weight)
        nn.init.zeros_(self.ada[1].bias)

    def attention(self, x):
        b, n, d = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d // self.heads), dim=-1)
        return self.proj((att @ v).transpose(1, 2).reshape(b, n, d))

    def forward(self, x, c):
        sh1, sc1, g1, sh2, sc2, g2 = self.ada(c).chunk(6, dim=1)
        x = x + g1[:, None, :] * self.attention(modulate(self.norm1(x), sh1, sc1))
        x = x + g2[:, None, :] * self.mlp(modulate(self.norm2(x), sh2, sc2))
        return x


class DenoiserModel(nn.Module):
    """Velocity network over latent tokens (patch size 1) with an alignment head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        h = cfg.hidden
        self.cfg = cfg
        self.side = cfg.latent_side
        self.channels = cfg.latent_channels
        self.time_freqs = cfg.time_freqs
        self.align_depth = cfg.align_depth
        self.embed = nn.Linear(cfg.latent_channels, h)
        self.register_buffer("pos", sincos_2d(self.side, h))
        self.time_mlp = nn.Sequential(nn.Linear(cfg.time_freqs, h), nn.SiLU(), nn.Linear(h, h))
        self.cond_embed = nn.Linear(cfg.teacher_dim, h)
        self.null_embed = nn.Parameter(torch.randn(h) * 0.02)
        self.blocks = nn.ModuleList(Block(h, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth))
        self.projector = nn.Sequential(
            nn.Linear(h, cfg.projector_hidden), nn.SiLU(), nn.Linear(cfg.projector_hidden, cfg.teacher_dim))
        self.final_norm = nn.LayerNorm(h, elementwise_affine=False, eps=1e-6)
        self.final_ada = nn.Sequential(nn.SiLU(), nn.Linear(h, 2 * h))
        self.out = nn.Linear(h, cfg.latent_channels)
        for layer in (self.final_ada[1], self.out):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def condition(self, t, cond, drop):
        """Time embedding plus the condition, or the null embedding where ``drop``."""
        c = self.cond_embed(cond) if cond is not None else None
        null = self.null_embed.to(t.dtype).expand(len(t), -1)
        if c is None:
            c = null
        elif drop is not None:
            c = torch.where(drop[:, None], null, c)
        return self.time_mlp(time_features(t, self.time_freqs)) + c

    def forward(self, x, t, cond=None, drop=None, align_only=False):
        """x: (B, C, s, s); t: (B,); cond: (B, D_c) or None for unconditional.

        Returns (velocity, projected tokens (B, s*s, D_c)). With ``align_only``
        the network stops after the alignment block and velocity is None.
        """
        b = x.shape[0]
        tokens = self.embed(x.flatten(2).transpose(1, 2)) + self.pos.to(x.dtype)
        c = self.condition(t, cond, drop)
        projected = None
        for i, block in enumerate(self.blocks, start=1):
            tokens = block(tokens, c)
            if i == self.align_depth:
                projected = self.projector(tokens)
                if align_only:
                    return None, projected
        shift, scale = self.final_ada(c).chunk(2, dim=1)
        out = self.out(modulate(self.final_norm(tokens), shift, scale))
        return out.transpose(1, 2).reshape(b, self.channels, self.side, self.side), projected


class LatentNorm(nn.Module):
    """Per-channel running statistics that whiten VAE latents for the denoiser."""

    def __init__(self, channels: int, momentum: float = 0.01):
        super().__init__()
        self.momentum = momentum
        self.register_buffer("mean", torch.zeros(channels))
        self.register_buffer("var", torch.ones(channels))
        self.register_buffer("initialized", torch.zeros((), dtype=torch.bool))

    @torch.no_grad()
    def update(self, z):
        m = z.mean(dim=(0, 2, 3))
        v = z.var(dim=(0, 2, 3), unbiased=False)
        if not bool(self.initialized):
            self.mean.copy_(m)
            self.var.copy_(v)
            self.initialized.fill_(True)
        else:
            self.mean.lerp_(m, self.momentum)
            self.var.lerp_(v, self.momentum)

    def normalize(self, z):
        return (z - self.mean[None, :, None, None].to(z.dtype)) / self.std(z.dtype)

    def denormalize(self, zn):
        return zn * self.std(zn.dtype) + self.mean[None, :, None, None].to(zn.dtype)

    def std(self, dtype):
        return torch.sqrt(self.var.to(dtype) + 1e-6)[None, :, None, None]


class InterpolantModel(nn.Module):
    """Trainable VAE + denoiser, latent statistics, and the frozen teacher."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.vae = ToyVae(cfg)
        self.denoiser = DenoiserModel(cfg)
        self.latent_norm = LatentNorm(cfg.latent_channels)
        self.teacher = TeacherExtractor(cfg)

    def trainable(self):
        return {"vae": self.vae, "denoiser": self.denoiser}

    def parameter_count(self, part: str | None = None) -> int:
        mods = [self.trainable()[part]] if part else list(self.trainable().values())
        return sum(p.numel() for m in mods for p in m.parameters())



def build_model(cfg: ModelConfig, seed: int = 0) -> InterpolantModel:
    """Construct with parameter initialization drawn from ``seed`` only."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return InterpolantModel(cfg)
