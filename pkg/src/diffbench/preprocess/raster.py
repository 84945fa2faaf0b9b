"""Pixel and token containers, PNG I/O, tile geometry."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from ..datastore import TileRecord
from ..errors import BoundsError, DataError, UsageError


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit image stored as an (height, width, channels) array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise UsageError(f"raster must be HxWx1 or HxWx3, got {arr.shape}")
        if arr.dtype != np.uint8:
            raise UsageError(f"raster samples must be uint8, got {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError("raster must be at least 1x1")
        arr = np.ascontiguousarray(arr)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}x{self.channels}:".encode())
        h.update(self.data.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """Square grid of real-valued tokens, shape (side, side, dim)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise UsageError(f"token grid must be g x g x dim, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("token grid contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


def read_png(path) -> RasterImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("RGB", "L"):
            im = im.convert("RGB")
        return RasterImage(np.asarray(im, dtype=np.uint8))


def write_png(img: RasterImage, path) -> None:
    from PIL import Image

    data = img.data[:, :, 0] if img.channels == 1 else img.data
    Image.fromarray(data).save(path, format="PNG")


def expand_tile_coords(rec: TileRecord, margin: int, slide_bounds: tuple[int, int]) -> TileRecord:
    """Grow a tile by ``margin`` pixels on every side, keeping its centre."""
    if margin < 0:
        raise UsageError("margin must be non-negative")
    x, y = rec.x - margin, rec.y - margin
    w, h = rec.width + 2 * margin, rec.height + 2 * margin
    width, height = slide_bounds
    for side, overflow in (("left", x < 0), ("top", y < 0), ("right", x + w > width), ("bottom", y + h > height)):
        if overflow:
            raise BoundsError(f"tile {rec.tile_id}: expanded tile crosses the {side} slide edge", side=side)
    return replace(rec, x=x, y=y, width=w, height=h)


def read_region(slide: np.ndarray, rec: TileRecord) -> RasterImage:
    """Cut the pixels covered by ``rec`` out of a slide array (H x W x C)."""
    height, width = slide.shape[:2]
    if rec.x < 0 or rec.y < 0 or rec.x + rec.width > width or rec.y + rec.height > height:
        raise BoundsError(f"tile {rec.tile_id} lies outside the {width}x{height} slide")
    return RasterImage(slide[rec.y:rec.y + rec.height, rec.x:rec.x + rec.width].copy())


def crop_offsets(src: tuple[int, int], target: tuple[int, int]) -> tuple[int, int]:
    (sw, sh), (tw, th) = src, target
    return (sw - tw) // 2, (sh - th) // 2


def center_crop(img: RasterImage, target: tuple[int, int]) -> RasterImage:
    """Crop to ``target = (w, h)`` at offset floor((src - target) / 2) per axis."""
    tw, th = target
    if tw < 1 or th < 1:
        raise UsageError("crop target must be at least 1x1")
    if tw > img.width or th > img.height:
        raise UsageError(f"crop target {tw}x{th} exceeds source {img.width}x{img.height}")
    ox, oy = crop_offsets((img.width, img.height), target)
    return RasterImage(img.data[oy:oy + th, ox:ox + tw].copy())


def procedural_slide(width: int, height: int, seed: int = 0) -> np.ndarray:
    """Deterministic pink/purple texture standing in for a scanned slide."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    field = np.zeros((height, width), dtype=np.float32)
    for _ in range(6):
        fx, fy = rng.uniform(0.005, 0.08, 2)
        phase = rng.uniform(0, 2 * np.pi)
        field += np.sin(fx * xx + fy * yy + phase).astype(np.float32)
    noise = rng.integers(0, 24, size=(height, width), dtype=np.int16)
    base = np.array([228, 180, 212], dtype=np.float32)
    tint = np.array([-60, -70, -25], dtype=np.float32)
    mix = (np.tanh(field / 2.0) + 1.0) / 2.0
    img = base[None, None, :] + mix[:, :, None] * tint[None, None, :] + noise[:, :, None]
    return np.clip(img, 0, 255).astype(np.uint8)
