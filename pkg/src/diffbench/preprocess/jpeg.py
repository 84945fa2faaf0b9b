"""Baseline sequential JPEG (JFIF) encoder and decoder.

Encoding uses the Annex K quantization tables scaled with the IJG quality
formula and the Annex K typical Huffman tables, so the byte stream is a pure
function of the pixels and the settings. The decoder handles any baseline
Huffman stream with 1x1 / 2x1 / 2x2 chroma sampling, which is what common
encoders emit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, UsageError
from .raster import RasterImage

# Annex K.1, natural (row-major) order
BASE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

BASE_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int64)

# Annex K.3 typical Huffman tables: (code counts per length 1..16, symbol values)
DC_LUMA = ([0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0], list(range(12)))
DC_CHROMA = ([0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0], list(range(12)))
AC_LUMA = (
    [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D],
    [
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
        0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
        0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
        0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
        0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
        0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
        0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
        0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
        0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
        0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
        0xF9, 0xFA,
    ],
)
AC_CHROMA = (
    [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77],
    [
        0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
        0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
        0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
        0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
        0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
        0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
        0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
        0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
        0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
        0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
        0xF9, 0xFA,
    ],
)


def _zigzag_order() -> np.ndarray:
    order = sorted(
        ((u, v) for u in range(8) for v in range(8)),
        key=lambda p: (p[0] + p[1], p[0] if (p[0] + p[1]) % 2 else p[1]),
    )
    return np.array([u * 8 + v for u, v in order])


ZIGZAG = _zigzag_order()  # ZIGZAG[k] = natural index of the k-th zigzag coefficient


def _dct_matrix() -> np.ndarray:
    k = np.arange(8)
    m = np.cos((2 * k[None, :] + 1) * k[:, None] * np.pi / 16) * 0.5
    m[0] /= np.sqrt(2.0)
    return m


DCT = _dct_matrix()


@dataclass(frozen=True)
class JpegConfig:
    quality: int = 70
    chroma_subsampling: str = "4:2:0"

    def __post_init__(self):
        if not 1 <= int(self.quality) <= 100:
            raise UsageError(f"JPEG quality must be in 1..100, got {self.quality}")
        if self.chroma_subsampling not in ("4:2:0", "4:4:4"):
            raise UsageError(f"unsupported chroma subsampling {self.chroma_subsampling!r}")


def quality_scale(quality: int) -> int:
    if not 1 <= quality <= 100:
        raise UsageError(f"JPEG quality must be in 1..100, got {quality}")
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def jpeg_quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """IJG-scaled luma and chroma tables (8x8, natural order)."""
    scale = quality_scale(int(quality))

    def scaled(base):
        return np.clip((base * scale + 50) // 100, 1, 255)

    return scaled(BASE_LUMA), scaled(BASE_CHROMA)


# ---------------------------------------------------------------- colour & blocks

def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136286 * cb - 0.714136286 * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)


def _pad_edge(plane: np.ndarray, mult_h: int, mult_w: int) -> np.ndarray:
    h, w = plane.shape
    ph, pw = -h % mult_h, -w % mult_w
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)


def forward_quantize(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Level-shift, 8x8 DCT, divide and round half away from zero."""
    blocks = _to_blocks(plane - 128.0)
    coef = DCT @ blocks @ DCT.T
    q = coef / table
    return (np.sign(q) * np.floor(np.abs(q) + 0.5)).astype(np.int64)


def inverse_quantize(q: np.ndarray, table: np.ndarray) -> np.ndarray:
    blocks = DCT.T @ (q * table).astype(np.float64) @ DCT
    return _from_blocks(blocks) + 128.0


# ---------------------------------------------------------------- Huffman tables

def _build_codes(spec):
    counts, values = spec
    codes = {}
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(counts[length - 1]):
            codes[values[k]] = (code, length)
            code += 1
            k += 1
        code <<= 1
    return codes


def _build_lookup(counts, values):
    """16-bit peek table: lookup[bits] = (symbol << 8) | code_length."""
    table = np.zeros(1 << 16, dtype=np.int32)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(counts[length - 1]):
            lo = code << (16 - length)
            hi = (code + 1) << (16 - length)
            table[lo:hi] = (values[k] << 8) | length
            code += 1
            k += 1
        code <<= 1
    return table.tolist()


class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, code: int, length: int):
        self.acc = (self.acc << length) | code
        self.nbits += length
        while self.nbits >= 8:
            self.nbits -= 8
            byte = (self.acc >> self.nbits) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self.acc &= (1 << self.nbits) - 1

    def flush(self) -> bytes:
        if self.nbits:
            self.write((1 << (8 - self.nbits)) - 1, 8 - self.nbits)
        return bytes(self.out)


def _magnitude(v: int) -> tuple[int, int]:
    size = abs(v).bit_length()
    bits = v if v >= 0 else v + (1 << size) - 1
    return size, bits


def _encode_block(w: _BitWriter, zz: list, pred: int, dc_codes, ac_codes) -> int:
    diff = zz[0] - pred
    size, bits = _magnitude(diff)
    code, length = dc_codes[size]
    w.write(code, length)
    if size:
        w.write(bits, size)
    run = 0
    last = 63
    while last > 0 and zz[last] == 0:
        last -= 1
    for k in range(1, last + 1):
        v = zz[k]
        if v == 0:
            run += 1
            continue
        while run > 15:
            code, length = ac_codes[0xF0]
            w.write(code, length)
            run -= 16
        size, bits = _magnitude(v)
        code, length = ac_codes[(run << 4) | size]
        w.write(code, length)
        w.write(bits, size)
        run = 0
    if last < 63:
        code, length = ac_codes[0x00]
        w.write(code, length)
    return zz[0]


# ---------------------------------------------------------------- encoder

def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", 0xFF00 | marker, len(payload) + 2) + payload


def encode_jpeg(img: RasterImage, cfg: JpegConfig = JpegConfig()) -> bytes:
    if img.channels != 3:
        raise UsageError(f"JPEG encoding expects 3 channels, got {img.channels}")
    h, w = img.height, img.width
    sub = cfg.chroma_subsampling == "4:2:0"
    mcu = 16 if sub else 8
    luma_q, chroma_q = jpeg_quant_tables(cfg.quality)
    ycc = rgb_to_ycbcr(img.data)
    planes = [_pad_edge(ycc[..., c], mcu, mcu) for c in range(3)]
    if sub:
        for c in (1, 2):
            p = planes[c]
            planes[c] = p.reshape(p.shape[0] // 2, 2, p.shape[1] // 2, 2).mean(axis=(1, 3))
    tables = [luma_q, chroma_q, chroma_q]
    coeffs = []
    for plane, table in zip(planes, tables):
        q = forward_quantize(plane, table)
        coeffs.append(q.reshape(q.shape[0], q.shape[1], 64)[:, :, ZIGZAG])

    out = bytearray(b"\xFF\xD8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")
    for tid, table in enumerate((luma_q, chroma_q)):
        out += _segment(0xDB, bytes([tid]) + bytes(table.reshape(64)[ZIGZAG].astype(np.uint8)))
    hs = 2 if sub else 1
    sof = struct.pack(">BHHB", 8, h, w, 3)
    sof += bytes([1, (hs << 4) | hs, 0, 2, 0x11, 1, 3, 0x11, 1])
    out += _segment(0xC0, sof)
    for cls_id, spec in ((0x00, DC_LUMA), (0x10, AC_LUMA), (0x01, DC_CHROMA), (0x11, AC_CHROMA)):
        out += _segment(0xC4, bytes([cls_id]) + bytes(spec[0]) + bytes(spec[1]))
    out += _segment(0xDA, bytes([3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]))

    dc_codes = [_build_codes(DC_LUMA), _build_codes(DC_CHROMA)]
    ac_codes = [_build_codes(AC_LUMA), _build_codes(AC_CHROMA)]
    writer = _BitWriter()
    preds = [0, 0, 0]
    y_blocks = coeffs[0].tolist()
    c_blocks = [coeffs[1].tolist(), coeffs[2].tolist()]
    mcu_rows, mcu_cols = planes[0].shape[0] // mcu, planes[0].shape[1] // mcu
    for my in range(mcu_rows):
        for mx in range(mcu_cols):
            for dy in range(hs):
                for dx in range(hs):
                    blk = y_blocks[my * hs + dy][mx * hs + dx]
                    preds[0] = _encode_block(writer, blk, preds[0], dc_codes[0], ac_codes[0])
            for c in (0, 1):
                blk = c_blocks[c][my][mx]
                preds[c + 1] = _encode_block(writer, blk, preds[c + 1], dc_codes[1], ac_codes[1])
    out += writer.flush()
    out += b"\xFF\xD9"
    return bytes(out)


# ---------------------------------------------------------------- decoder

class _BitReader:
    def __init__(self, data: bytes, pos: int):
        # unstuff the entropy-coded segment up to the next real marker
        out = bytearray()
        i = pos
        n = len(data)
        while i < n:
            j = data.find(b"\xFF", i)
            if j < 0:
                out += data[i:]
                i = n
                break
            out += data[i:j]
            nxt = data[j + 1] if j + 1 < n else 0xD9
            if nxt == 0x00:
                out.append(0xFF)
                i = j + 2
            elif 0xD0 <= nxt <= 0xD7:
                raise DataError("restart markers are not supported")
            else:
                i = j
                break
        self.end = i
        self.buf = bytes(out) + b"\x00\x00\x00\x00"
        self.bit = 0
        self.limit = len(out) * 8

    def peek16(self) -> int:
        p = self.bit >> 3
        chunk = (self.buf[p] << 16) | (self.buf[p + 1] << 8) | self.buf[p + 2]
        return (chunk >> (8 - (self.bit & 7))) & 0xFFFF

    def read(self, n: int) -> int:
        if n == 0:
            return 0
        p = self.bit >> 3
        chunk = int.from_bytes(self.buf[p:p + 4], "big")
        val = (chunk >> (32 - (self.bit & 7) - n)) & ((1 << n) - 1)
        self.bit += n
        return val

    def decode(self, lookup) -> int:
        entry = lookup[self.peek16()]
        length = entry & 0xFF
        if length == 0:
            raise DataError("invalid Huffman code in scan")
        self.bit += length
        if self.bit > self.limit + 16:
            raise DataError("scan data ended early")
        return entry >> 8


def _extend(bits: int, size: int) -> int:
    if size == 0:
        return 0
    return bits if bits >= (1 << (size - 1)) else bits - (1 << size) + 1


def _upsample_fancy(plane: np.ndarray, fy: int, fx: int) -> np.ndarray:
    """Triangle-filter chroma upsampling (3/4 near + 1/4 far per axis)."""
    out = plane.astype(np.float64)
    if fy == 2:
        up = np.vstack([out[:1], out[:-1]])
        down = np.vstack([out[1:], out[-1:]])
        rows = np.empty((out.shape[0] * 2, out.shape[1]))
        rows[0::2] = 0.75 * out + 0.25 * up
        rows[1::2] = 0.75 * out + 0.25 * down
        out = rows
    if fx == 2:
        left = np.hstack([out[:, :1], out[:, :-1]])
        right = np.hstack([out[:, 1:], out[:, -1:]])
        cols = np.empty((out.shape[0], out.shape[1] * 2))
        cols[:, 0::2] = 0.75 * out + 0.25 * left
        cols[:, 1::2] = 0.75 * out + 0.25 * right
        out = cols
    return out


def decode_jpeg(data: bytes) -> RasterImage:
    if data[:2] != b"\xFF\xD8":
        raise DataError("not a JPEG stream (missing SOI)")
    qtables: dict[int, np.ndarray] = {}
    lookups: dict[tuple[int, int], list] = {}
    frame = None
    planes = None
    pos = 2
    n = len(data)
    while pos < n:
        if data[pos] != 0xFF:
            raise DataError(f"expected marker at byte {pos}")
        marker = data[pos + 1]
        if marker == 0xFF:
            pos += 1
            continue
        if marker == 0xD9:
            break
        (length,) = struct.unpack(">H", data[pos + 2:pos + 4])
        seg = data[pos + 4:pos + 2 + length]
        pos += 2 + length
        if marker == 0xDB:
            i = 0
            while i < len(seg):
                pq, tq = seg[i] >> 4, seg[i] & 15
                if pq:
                    vals = np.frombuffer(seg[i + 1:i + 129], dtype=">u2").astype(np.int64)
                    i += 129
                else:
                    vals = np.frombuffer(seg[i + 1:i + 65], dtype=np.uint8).astype(np.int64)
                    i += 65
                table = np.empty(64, dtype=np.int64)
                table[ZIGZAG] = vals
                qtables[tq] = table.reshape(8, 8)
        elif marker == 0xC4:
            i = 0
            while i < len(seg):
                tc_th = seg[i]
                counts = list(seg[i + 1:i + 17])
                total = sum(counts)
                values = list(seg[i + 17:i + 17 + total])
                lookups[(tc_th >> 4, tc_th & 15)] = _build_lookup(counts, values)
                i += 17 + total
        elif marker == 0xC0 or marker == 0xC1:
            precision, h, w, nc = struct.unpack(">BHHB", seg[:6])
            if precision != 8:
                raise DataError("only 8-bit JPEG is supported")
            comps = []
            for c in range(nc):
                cid, hv, tq = seg[6 + 3 * c:9 + 3 * c]
                comps.append((cid, hv >> 4, hv & 15, tq))
            frame = (h, w, comps)
        elif marker in (0xC2, 0xC3, 0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
            raise DataError("only baseline sequential JPEG is supported")
        elif marker == 0xDD:
            (interval,) = struct.unpack(">H", seg[:2])
            if interval:
                raise DataError("restart intervals are not supported")
        elif marker == 0xDA:
            if frame is None:
                raise DataError("scan before frame header")
            planes, pos = _decode_scan(data, pos, seg, frame, lookups)
    if planes is None:
        raise DataError("no scan data in JPEG stream")
    h, w, comps = frame
    hmax = max(c[1] for c in comps)
    vmax = max(c[2] for c in comps)
    full = []
    for (cid, hs, vs, tq), q in zip(comps, planes):
        # decoded planes are 8-bit samples, as in any conforming decoder
        plane = np.clip(np.floor(inverse_quantize(q, qtables[tq]) + 0.5), 0, 255)
        plane = _upsample_fancy(plane, vmax // vs, hmax // hs)
        full.append(plane[:h, :w])
    if len(full) == 1:
        gray = np.clip(np.floor(full[0] + 0.5), 0, 255).astype(np.uint8)
        return RasterImage(gray)
    if len(full) != 3:
        raise DataError(f"unsupported component count {len(full)}")
    return RasterImage(ycbcr_to_rgb(np.stack(full, axis=-1)))


def _decode_scan(data, pos, seg, frame, lookups):
    h, w, comps = frame
    ns = seg[0]
    if ns != len(comps):
        raise DataError("non-interleaved scans are not supported")
    sel = {}
    for k in range(ns):
        cid, tables = seg[1 + 2 * k], seg[2 + 2 * k]
        sel[cid] = (tables >> 4, tables & 15)
    hmax = max(c[1] for c in comps)
    vmax = max(c[2] for c in comps)
    mcu_w, mcu_h = 8 * hmax, 8 * vmax
    mcus_x = -(-w // mcu_w)
    mcus_y = -(-h // mcu_h)
    reader = _BitReader(data, pos)
    out = []
    plan = []
    for cid, hs, vs, _ in comps:
        td, ta = sel[cid]
        arr = np.zeros((mcus_y * vs, mcus_x * hs, 64), dtype=np.int64)
        out.append(arr)
        plan.append((hs, vs, lookups[(0, td)], lookups[(1, ta)]))
    preds = [0] * len(comps)
    zz = ZIGZAG
    for my in range(mcus_y):
        for mx in range(mcus_x):
            for ci, (hs, vs, dc_lut, ac_lut) in enumerate(plan):
                for dy in range(vs):
                    for dx in range(hs):
                        block = [0] * 64
                        size = reader.decode(dc_lut)
                        preds[ci] += _extend(reader.read(size), size)
                        block[0] = preds[ci]
                        k = 1
                        while k < 64:
                            rs = reader.decode(ac_lut)
                            run, size = rs >> 4, rs & 15
                            if size == 0:
                                if run == 15:
                                    k += 16
                                    continue
                                break
                            k += run
                            if k > 63:
                                raise DataError("AC coefficient index out of range")
                            block[k] = _extend(reader.read(size), size)
                            k += 1
                        out[ci][my * vs + dy, mx * hs + dx] = block
    planes = []
    for arr in out:
        nat = np.empty_like(arr)
        nat[:, :, zz] = arr
        planes.append(nat.reshape(arr.shape[0], arr.shape[1], 8, 8))
    return planes, reader.end


def jpeg_roundtrip(img: RasterImage, cfg: JpegConfig = JpegConfig()) -> RasterImage:
    """Encode to baseline JPEG bytes and decode them again."""
    if img.channels != 3:
        raise UsageError(f"JPEG round-trip expects a 3-channel image, got {img.channels}")
    return decode_jpeg(encode_jpeg(img, cfg))


def psnr(a: RasterImage, b: RasterImage) -> float:
    mse = np.mean((a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2)
    return float("inf") if mse == 0 else float(10 * np.log10(255.0 ** 2 / mse))
