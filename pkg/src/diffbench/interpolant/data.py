"""Procedural 32x32 texture dataset with a discrete group label per image.

Each group is a texture family (oriented stripes, plaid, blobs, rings) with
its own palette; per-image parameters (frequency, orientation, phase, colour
jitter, noise) vary continuously, so the teacher's pooled feature carries
real information about the image it came from.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..datastore import TileManifest, TileRecord, load_manifest, save_manifest
from ..errors import DataError, UsageError

DEFAULT_PROPORTIONS = (0.4, 0.3, 0.2, 0.1)
GROUP_NAMES = ("STR", "PLD", "BLB", "RNG")
PALETTES = np.array([
    [[0.85, 0.55, 0.75], [0.45, 0.20, 0.55]],
    [[0.95, 0.80, 0.85], [0.70, 0.30, 0.40]],
    [[0.90, 0.70, 0.90], [0.30, 0.15, 0.45]],
    [[0.80, 0.75, 0.95], [0.55, 0.35, 0.25]],
])
SPLIT_FRACTIONS = {"train": 0.8, "val_in": 0.1, "val_out": 0.1}


@dataclass(frozen=True)
class ToyDataset:
    images: np.ndarray  # (n, size, size, 3) uint8
    groups: np.ndarray  # (n,) int
    manifest: TileManifest

    def __len__(self):
        return len(self.images)

    def indices(self, *splits: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.manifest) if r.split in splits], dtype=np.int64)

    def as_float(self, idx=None) -> np.ndarray:
        """Images as (n, 3, H, W) float32 in [-1, 1]."""
        imgs = self.images if idx is None else self.images[idx]
        return (imgs.transpose(0, 3, 1, 2).astype(np.float32) / 127.5) - 1.0


def _pattern(kind: int, yy, xx, rng, n):
    freq = rng.uniform(0.25, 0.9, n)[:, None, None]
    theta = rng.uniform(0, np.pi, n)[:, None, None]
    phase = rng.uniform(0, 2 * np.pi, n)[:, None, None]
    u = np.cos(theta) * xx + np.sin(theta) * yy
    v = -np.sin(theta) * xx + np.cos(theta) * yy
    if kind == 0:
        field = np.sin(freq * u + phase)
    elif kind == 1:
        field = 0.5 * (np.sin(freq * u + phase) + np.sin(0.7 * freq * v + phase))
    elif kind == 2:
        field = np.zeros((n,) + xx.shape)
        for _ in range(3):
            cy, cx = rng.uniform(0, 32, (2, n))[:, :, None, None]
            r = rng.uniform(3, 8, n)[:, None, None]
            field += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r ** 2))
        field = 2 * np.clip(field, 0, 1) - 1
    else:
        cy, cx = rng.uniform(8, 24, (2, n))[:, :, None, None]
        field = np.sin(freq * np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) + phase)
    return field


def render_group(kind: int, n: int, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    field = _pattern(kind, yy, xx, rng, n)
    mix = ((field + 1) / 2)[..., None]
    lo, hi = PALETTES[kind]
    jitter = rng.normal(0, 0.05, (n, 1, 1, 3))
    img = lo + (hi - lo) * mix + jitter + rng.normal(0, 0.02, (n, size, size, 3))
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def generate_toy_dataset(n: int, seed: int = 0, proportions=DEFAULT_PROPORTIONS,
                         size: int = 32) -> ToyDataset:
    """Deterministic toy corpus; groups are drawn i.i.d. with ``proportions``.

    Each image is assigned to one of 8 pseudo-slides per group; slides 0-5
    supply train and val_in tiles (9:1), slides 6-7 are held out as val_out.
    """
    if n < 1:
        raise UsageError("dataset size must be >= 1")
    p = np.asarray(proportions, dtype=np.float64)
    if p.ndim != 1 or len(p) > len(GROUP_NAMES) or (p < 0).any() or not np.isclose(p.sum(), 1.0):
        raise UsageError("proportions must be up to 4 non-negative shares summing to 1")
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, 0x70F]))
    groups = rng.choice(len(p), size=n, p=p)
    slides = rng.integers(0, 8, n)
    in_val = rng.random(n) < 1 / 9
    images = np.empty((n, size, size, 3), dtype=np.uint8)
    for g in range(len(p)):
        idx = np.flatnonzero(groups == g)
        if len(idx):
            images[idx] = render_group(g, len(idx), rng, size)
    recs = []
    for i in range(n):
        split = "val_out" if slides[i] >= 6 else ("val_in" if in_val[i] else "train")
        name = GROUP_NAMES[groups[i]]
        recs.append(TileRecord(f"toy-{i:06d}", f"{name}-{slides[i]}", name, 0, 0, size, size, 0.5, split))
    return ToyDataset(images, groups, TileManifest(tuple(recs)))


def save_toy_dataset(data: ToyDataset, directory) -> Path:
    """Write ``images.npy`` and ``manifest.tsv``; groups live in the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / "images.npy", data.images, allow_pickle=False)
    save_manifest(data.manifest, d / "manifest.tsv")
    return d


def load_toy_dataset(directory) -> ToyDataset:
    d = Path(directory)
    try:
        images = np.load(d / "images.npy", allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read toy images in {d}: {exc}") from None
    manifest = load_manifest(d / "manifest.tsv")
    if images.dtype != np.uint8 or images.ndim != 4 or len(images) != len(manifest):
        raise DataError(f"{d}: images.npy does not match the manifest")
    try:
        groups = np.array([GROUP_NAMES.index(r.group) for r in manifest], dtype=np.int64)
    except ValueError:
        raise DataError(f"{d}: manifest has a group outside {GROUP_NAMES}") from None
    return ToyDataset(images, groups, manifest)
