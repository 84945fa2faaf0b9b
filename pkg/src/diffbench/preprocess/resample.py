"""Separable cubic resampling with anti-aliasing.

Upsampling (and same-size) uses the Keys cubic kernel (a = -0.5) directly.
When downscaling by a factor s > 1 the signal is first reconstructed with the
unit cubic and then low-passed with the same cubic stretched by s, so the
effective kernel is their convolution, ``K(u) = int k(x) k((u - x) / s) / s dx``.
Both factors reproduce linear functions, so linear ramps survive any resize.

Samples beyond the border are obtained by linear extrapolation through the
edge sample (f(-m) = 2 f(0) - f(m)), which keeps weight rows summing to one
and constants and ramps intact up to the edge. Weight rows are normalized
explicitly.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import UsageError
from .raster import RasterImage, TokenGrid

A = -0.5
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def cubic(x, a: float = A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    far = (((x - 5.0) * x + 8.0) * x - 4.0) * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def antialiased_kernel(u, s: float):
    """Cubic reconstruction convolved with a cubic prefilter of width ``s``.

    Integrated exactly (up to rounding) with Gauss-Legendre on every
    polynomial piece of the product.
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    fixed = np.arange(-2.0, 3.0)
    moving = u[:, None] - s * np.arange(-2.0, 3.0)[None, :]
    bps = np.concatenate([np.broadcast_to(fixed, (u.size, 5)), moving], axis=1)
    lo = np.maximum(-2.0, u - 2.0 * s)[:, None]
    hi = np.minimum(2.0, u + 2.0 * s)[:, None]
    bps = np.sort(np.clip(bps, lo, hi), axis=1)
    a, b = bps[:, :-1], bps[:, 1:]
    half = np.maximum(b - a, 0.0) / 2.0
    x = half[..., None] * _GL_NODES + ((a + b) / 2.0)[..., None]
    integrand = cubic(x) * cubic((u[:, None, None] - x) / s) / s
    return (integrand * _GL_WEIGHTS * half[..., None]).sum(axis=(1, 2))


def _reflect(j: int, n: int):
    """Map an out-of-range index onto (index, multiplier) pairs."""
    if 0 <= j < n:
        return [(j, 1.0)]
    edge = 0 if j < 0 else n - 1
    mirror = 2 * edge - j
    mirror = min(max(mirror, 0), n - 1)
    return [(edge, 2.0), (mirror, -1.0)]


@lru_cache(maxsize=256)
def weight_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out x n_in) resampling weights; each row sums to one."""
    if n_in < 1 or n_out < 1:
        raise UsageError("resize dimensions must be >= 1")
    scale = n_in / n_out
    s = max(scale, 1.0)
    radius = 2.0 * s + (2.0 if scale > 1.0 else 0.0)
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        c = (o + 0.5) * scale - 0.5
        js = np.arange(int(np.floor(c - radius)), int(np.ceil(c + radius)) + 1)
        if scale > 1.0:
            taps = antialiased_kernel(c - js, s)
        else:
            taps = cubic(c - js)
        for j, t in zip(js, taps):
            if t == 0.0:
                continue
            for idx, mult in _reflect(int(j), n_in):
                w[o, idx] += mult * t
        w[o] /= w[o].sum()
    w.setflags(write=False)
    return w


def _resize_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    wy = weight_matrix(arr.shape[0], out_h)
    wx = weight_matrix(arr.shape[1], out_w)
    tmp = np.einsum("oi,ijc->ojc", wy, arr.astype(np.float64))
    return np.einsum("pj,ojc->opc", wx, tmp)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def bicubic_resize(obj, target):
    """Resize a RasterImage to ``target = (w, h)`` or a TokenGrid to side ``target``."""
    if isinstance(obj, TokenGrid):
        side = target if np.isscalar(target) else target[0]
        if not np.isscalar(target) and target[0] != target[1]:
            raise UsageError("token grids stay square")
        if side < 1:
            raise UsageError("target side must be >= 1")
        return TokenGrid(_resize_array(obj.data, side, side).astype(np.float32))
    if isinstance(obj, RasterImage):
        tw, th = target
        if tw < 1 or th < 1:
            raise UsageError("target dimensions must be >= 1")
        out = np.clip(round_half_away(_resize_array(obj.data, th, tw)), 0, 255)
        return RasterImage(out.astype(np.uint8))
    raise UsageError(f"cannot resize {type(obj).__name__}")


def resize_tokens(tokens: np.ndarray, side: int) -> np.ndarray:
    """Batched token-grid resize: (..., g, g, dim) -> (..., side, side, dim)."""
    g = tokens.shape[-3]
    w = weight_matrix(g, side)
    out = np.einsum("oi,...ijc->...ojc", w, tokens.astype(np.float64))
    out = np.einsum("pj,...ojc->...opc", w, out)
    return out.astype(np.float32)
