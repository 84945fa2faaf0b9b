"""Image and token-grid transforms of the validation pipeline."""

from .jpeg import JpegConfig, decode_jpeg, encode_jpeg, jpeg_quant_tables, jpeg_roundtrip, psnr
from .pipeline import PRESETS, PipelineConfig, PipelineResult, parse_chain, resolve_preset, run_pipeline
from .raster import (
    RasterImage,
    TokenGrid,
    center_crop,
    crop_offsets,
    expand_tile_coords,
    procedural_slide,
    read_png,
    read_region,
    write_png,
)
from .resample import bicubic_resize, resize_tokens, weight_matrix

__all__ = [
    "JpegConfig", "decode_jpeg", "encode_jpeg", "jpeg_quant_tables", "jpeg_roundtrip", "psnr",
    "PRESETS", "PipelineConfig", "PipelineResult", "parse_chain", "resolve_preset", "run_pipeline",
    "RasterImage", "TokenGrid", "center_crop", "crop_offsets", "expand_tile_coords",
    "procedural_slide", "read_png", "read_region", "write_png",
    "bicubic_resize", "resize_tokens", "weight_matrix",
]
