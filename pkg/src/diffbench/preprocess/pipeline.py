"""Batch preprocessing of tile sets: the two-armed validation pipeline.

A chain is a list of ops applied in order to every tile of an arm. The
guidance arm holds the ``guidance`` split, the validation arm holds
``val_in`` and ``val_out``. Ops are written as short strings:

    expand:16      re-read the tile from its slide with a 16 px margin
    crop:224       center-crop to 224x224
    jpeg:70        JPEG round-trip at quality 70 (4:2:0)
    jpeg:70:444    same, without chroma subsampling
    resize:224     bicubic anti-aliased resize to 224x224

An op may be restricted to one split with ``@``, e.g. ``jpeg:70@val_out``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..datastore import TileManifest, TileRecord
from ..errors import DataError, DiffbenchError, UsageError
from .jpeg import JpegConfig, jpeg_roundtrip
from .raster import RasterImage, center_crop, expand_tile_coords, read_png, read_region, write_png
from .resample import bicubic_resize

log = logging.getLogger(__name__)

ARMS = {"guidance": ("guidance",), "validation": ("val_in", "val_out")}
FAILURE_BUDGET = 0.001


@dataclass(frozen=True)
class Op:
    kind: str
    args: tuple
    only_split: str | None = None

    @classmethod
    def parse(cls, text: str) -> "Op":
        body, _, split = text.strip().partition("@")
        kind, *args = body.split(":")
        if kind in ("expand", "crop", "resize"):
            if len(args) != 1:
                raise UsageError(f"op {text!r} takes one integer argument")
            parsed = (int(args[0]),)
        elif kind == "jpeg":
            if len(args) not in (1, 2):
                raise UsageError(f"op {text!r}: expected jpeg:<quality>[:420|444]")
            sub = {"420": "4:2:0", "444": "4:4:4"}.get(args[1] if len(args) == 2 else "420")
            if sub is None:
                raise UsageError(f"op {text!r}: unknown subsampling")
            parsed = (int(args[0]), sub)
            JpegConfig(*parsed)
        else:
            raise UsageError(f"unknown pipeline op {kind!r}")
        return cls(kind, parsed, split or None)

    def __str__(self):
        if self.kind == "jpeg":
            text = f"jpeg:{self.args[0]}" + (":444" if self.args[1] == "4:4:4" else "")
        else:
            text = f"{self.kind}:{self.args[0]}"
        return text + (f"@{self.only_split}" if self.only_split else "")


def parse_chain(text: str) -> tuple[Op, ...]:
    return tuple(Op.parse(t) for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class PipelineConfig:
    guidance: tuple[Op, ...] = ()
    validation: tuple[Op, ...] = ()
    name: str = "custom"


# Named after the published ablation rows. Source tiles
# are the 224 px extraction tiles; expanding by 16 px gives 256 px tiles.
PRESETS = {
    "224px + PNG images (all)": PipelineConfig((), (), "224px + PNG images (all)"),
    "256px + PNG images (all)": PipelineConfig(
        parse_chain("expand:16"), parse_chain("expand:16"), "256px + PNG images (all)"),
    "256px + JPEG val-out only": PipelineConfig(
        parse_chain("expand:16"), parse_chain("expand:16,jpeg:70@val_out"), "256px + JPEG val-out only"),
    "256px + JPEG images (all)": PipelineConfig(
        parse_chain("expand:16,jpeg:70"), parse_chain("expand:16,jpeg:70"), "256px + JPEG images (all)"),
}


def resolve_preset(name: str) -> PipelineConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise UsageError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}") from None


@dataclass
class PipelineResult:
    processed: int = 0
    log_lines: list[str] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


class SlideCache:
    """Loads ``{slide_id}.png`` lazily from a directory."""

    def __init__(self, root):
        self.root = Path(root) if root is not None else None
        self._cache: dict[str, np.ndarray] = {}

    def get(self, slide_id: str) -> np.ndarray:
        if self.root is None:
            raise UsageError("the expand op needs a slide directory")
        if slide_id not in self._cache:
            path = self.root / f"{slide_id}.png"
            if not path.exists():
                raise DataError(f"slide image {path} not found")
            self._cache[slide_id] = read_png(path).data
        return self._cache[slide_id]


def apply_chain(img: RasterImage, rec: TileRecord, ops, slides: SlideCache | None) -> RasterImage:
    for op in ops:
        if op.only_split and op.only_split != rec.split:
            continue
        if op.kind == "expand":
            slide = slides.get(rec.slide_id) if slides else SlideCache(None).get(rec.slide_id)
            height, width = slide.shape[:2]
            img = read_region(slide, expand_tile_coords(rec, op.args[0], (width, height)))
        elif op.kind == "crop":
            img = center_crop(img, (op.args[0], op.args[0]))
        elif op.kind == "resize":
            img = bicubic_resize(img, (op.args[0], op.args[0]))
        elif op.kind == "jpeg":
            img = jpeg_roundtrip(img, JpegConfig(*op.args))
    return img


def applied_ops(ops, split: str) -> str:
    kept = [str(op).split("@")[0] for op in ops if not op.only_split or op.only_split == split]
    return "+".join(kept) if kept else "identity"


def run_pipeline(manifest: TileManifest, tile_dir, out_dir, config: PipelineConfig,
                 slide_dir=None) -> PipelineResult:
    """Transform every guidance/validation tile; write PNGs and a transform log.

    Tiles are read from ``tile_dir/{tile_id}.png`` and written to
    ``out_dir/{split}/{tile_id}.png``. Individual tile failures are collected;
    the run raises only when more than 0.1% of the tiles fail.
    """
    result = PipelineResult()
    out_dir = Path(out_dir)
    if len(manifest) == 0:
        msg = "empty manifest: nothing to do"
        log.warning(msg)
        result.warnings.append(msg)
        return result
    slides = SlideCache(slide_dir)
    tile_dir = Path(tile_dir)
    todo = []
    for arm, splits in ARMS.items():
        ops = getattr(config, arm)
        todo.extend((rec, ops) for rec in manifest.by_split(*splits))
    for rec, ops in todo:
        try:
            src = tile_dir / f"{rec.tile_id}.png"
            if not src.exists():
                raise DataError(f"tile image {src} not found")
            img = apply_chain(read_png(src), rec, ops, slides)
            dst = out_dir / rec.split / f"{rec.tile_id}.png"
            dst.parent.mkdir(parents=True, exist_ok=True)
            write_png(img, dst)
        except UsageError:
            raise
        except (DiffbenchError, OSError, ValueError) as exc:
            result.failures.append((rec.tile_id, str(exc)))
            continue
        result.processed += 1
        result.log_lines.append(f"{rec.tile_id}\t{applied_ops(ops, rec.split)}\t{img.digest()}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "transform_log.tsv").write_text(
        "".join(line + "\n" for line in result.log_lines), encoding="utf-8")
    allowed = math.floor(FAILURE_BUDGET * len(todo))
    if len(result.failures) > allowed:
        first = result.failures[0]
        raise DataError(
            f"{len(result.failures)} of {len(todo)} tiles failed (budget {allowed}); "
            f"first: {first[0]}: {first[1]}")
    for tile_id, reason in result.failures:
        result.warnings.append(f"tile {tile_id} skipped: {reason}")
    return result
