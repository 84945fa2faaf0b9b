# Preprocessing ablation on procedural slides: tile size and JPEG compression.
#
#     python3 demos/02_preprocessing_ablation.py [workdir]
#
# We cut 224 px tiles from fake slides, run the three ablation presets, and
# measure how far each preset moves the validation tiles in a fixed feature
# space. FD here uses the toy teacher on 32 px thumbnails, so the numbers are
# only meaningful relative to each other.

import sys
import tempfile
from pathlib import Path

import numpy as np
import torch

from diffbench.datastore import EmbeddingSet, TileManifest, TileRecord
from diffbench.interpolant import ModelConfig, TeacherExtractor
from diffbench.metrics import fd_between
from diffbench.preprocess import (
    PRESETS,
    JpegConfig,
    RasterImage,
    bicubic_resize,
    jpeg_roundtrip,
    procedural_slide,
    psnr,
    read_png,
    read_region,
    run_pipeline,
    write_png,
)

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="diffbench-demo-"))
(work / "slides").mkdir(parents=True, exist_ok=True)
(work / "tiles").mkdir(exist_ok=True)

# %% Six slides, 9 tiles each, with a 16 px margin so every tile can grow to 256 px.
recs = []
for s in range(6):
    slide = procedural_slide(736, 736, seed=s)
    write_png(RasterImage(slide), work / "slides" / f"slide-{s}.png")
    for k in range(9):
        x, y = 16 + (k % 3) * 224, 16 + (k // 3) * 224
        split = ("guidance", "val_in", "val_out")[(s + k) % 3]
        rec = TileRecord(f"s{s}-t{k}", f"slide-{s}", f"G{s % 2}", x, y, 224, 224, 0.5, split)
        write_png(read_region(slide, rec), work / "tiles" / f"{rec.tile_id}.png")
        recs.append(rec)
manifest = TileManifest(tuple(recs))
print(f"{len(manifest)} tiles in {work}")

# %% JPEG at quality 70 is visually mild but measurable.
tile = read_png(work / "tiles" / "s0-t0.png")
for q in (50, 70, 90):
    print(f"JPEG q{q}: PSNR {psnr(tile, jpeg_roundtrip(tile, JpegConfig(q))):.2f} dB")

# %% Features: the frozen toy teacher on 32 px bicubic thumbnails.
teacher = TeacherExtractor(ModelConfig())


def features(paths, tag):
    thumbs = np.stack([bicubic_resize(read_png(p), (32, 32)).data for p in paths]).astype(np.float32)
    x = torch.from_numpy(thumbs.transpose(0, 3, 1, 2) / 127.5 - 1.0)
    with torch.no_grad():
        pooled, _ = teacher(x)
    return EmbeddingSet(pooled.numpy().astype(np.float64), "toy-teacher", tag)


# The two JPEG presets treat val_out tiles the same way; they differ on the guidance arm.
val_out = [r for r in manifest if r.split == "val_out"]
baseline = None
for name, config in PRESETS.items():
    out = work / "out" / name.replace(" ", "_").replace("+", "").replace("(", "").replace(")", "")
    result = run_pipeline(manifest, work / "tiles", out, config, work / "slides")
    emb = features([out / "val_out" / f"{r.tile_id}.png" for r in val_out], name)
    if baseline is None:
        # the untouched 224 px tiles are the reference arm
        baseline = features([work / "tiles" / f"{r.tile_id}.png" for r in val_out], "png-224")
    print(f"{name:28s} processed {result.processed:3d}  FD to 224px PNG {fd_between(baseline, emb):.5f}")

print("last transform log, first lines:")
print("\n".join((out / "transform_log.tsv").read_text().splitlines()[:3]))
