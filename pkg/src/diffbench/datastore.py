"""On-disk formats for embeddings and tile manifests, plus sampling helpers.

Embedding files are a small self-describing binary container (``EMB1``);
manifests are tab-separated UTF-8 text. Both are read back bit-exactly.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ManifestError,
    NonFiniteError,
    PairingError,
    QuotaError,
    TruncatedPayloadError,
    UsageError,
    VersionMismatchError,
)

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
MANIFEST_COLUMNS = ("tile_id", "slide_id", "group", "x", "y", "width", "height", "mpp", "split")
SPLITS = ("train", "val_in", "val_out", "guidance", "other")


def _check_finite(data: np.ndarray) -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteError(f"non-finite value at row {row}, col {col}", row=row, col=col)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """N x D float32 feature matrix with its provenance labels."""

    data: np.ndarray
    extractor_id: str = ""
    source_tag: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise UsageError(f"embedding data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise UsageError(f"embedding set needs rows >= 1 and dim >= 1, got {arr.shape}")
        _check_finite(arr)
        if arr is self.data:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def take(self, indices, source_tag: str | None = None) -> "EmbeddingSet":
        return EmbeddingSet(
            self.data[np.asarray(indices)],
            self.extractor_id,
            self.source_tag if source_tag is None else source_tag,
        )

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.extractor_id == other.extractor_id
            and self.source_tag == other.source_tag
            and self.data.shape == other.data.shape
            and np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32))
        )

    def __hash__(self):
        return hash((self.extractor_id, self.source_tag, self.data.shape, self.data.tobytes()))


def _encode_label(label: str) -> bytes:
    raw = label.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise UsageError("label longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def write_embeddings(emb: EmbeddingSet, destination: BinaryIO) -> int:
    """Serialize ``emb`` to ``destination``; returns the number of bytes written."""
    header = (
        EMB_MAGIC
        + struct.pack("<IQQ", EMB_VERSION, emb.rows, emb.dim)
        + _encode_label(emb.extractor_id)
        + _encode_label(emb.source_tag)
    )
    payload = emb.data.astype("<f4", copy=False).tobytes(order="C")
    destination.write(header)
    destination.write(payload)
    return len(header) + len(payload)


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    buf = source.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def read_embeddings(source: BinaryIO) -> EmbeddingSet:
    magic = source.read(4)
    if magic != EMB_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {EMB_MAGIC!r}")
    (version,) = struct.unpack("<I", _read_exact(source, 4, "version"))
    if version != EMB_VERSION:
        raise VersionMismatchError(f"unsupported embedding format version {version}")
    rows, dim = struct.unpack("<QQ", _read_exact(source, 16, "shape"))
    labels = []
    for what in ("extractor_id", "source_tag"):
        (length,) = struct.unpack("<H", _read_exact(source, 2, what + " length"))
        labels.append(_read_exact(source, length, what).decode("utf-8"))
    nbytes = rows * dim * 4
    payload = source.read(nbytes)
    if len(payload) != nbytes:
        raise TruncatedPayloadError(
            f"truncated payload: header claims {rows}x{dim} ({nbytes} bytes), got {len(payload)} bytes"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float32)
    _check_finite(data)
    return EmbeddingSet(data, labels[0], labels[1])


def save_embeddings(emb: EmbeddingSet, path) -> int:
    with open(path, "wb") as fh:
        return write_embeddings(emb, fh)


def load_embeddings(path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        return read_embeddings(fh)


@dataclass(frozen=True)
class TileRecord:
    tile_id: str
    slide_id: str
    group: str
    x: int
    y: int
    width: int
    height: int
    mpp: float = 0.5
    split: str = "other"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ManifestError(f"tile {self.tile_id}: width and height must be positive")
        if not self.mpp > 0:
            raise ManifestError(f"tile {self.tile_id}: mpp must be positive")
        if self.split not in SPLITS:
            raise ManifestError(f"tile {self.tile_id}: unknown split {self.split!r}")


@dataclass(frozen=True)
class TileManifest:
    entries: tuple[TileRecord, ...] = ()
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        for rec in entries:
            if rec.tile_id in seen:
                raise ManifestError(f"duplicate tile_id {rec.tile_id!r}")
            seen.add(rec.tile_id)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def groups(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.entries:
            counts[rec.group] = counts.get(rec.group, 0) + 1
        return dict(sorted(counts.items()))

    def by_split(self, *splits: str) -> "TileManifest":
        return replace(self, entries=tuple(r for r in self.entries if r.split in splits))


def format_manifest(manifest: TileManifest) -> str:
    lines = [f"# schema_version={manifest.schema_version}", "\t".join(MANIFEST_COLUMNS)]
    for r in manifest.entries:
        for text in (r.tile_id, r.slide_id, r.group):
            if "\t" in text or "\n" in text:
                raise ManifestError(f"tile {r.tile_id!r}: fields may not contain tabs or newlines")
        lines.append(
            "\t".join([r.tile_id, r.slide_id, r.group, str(r.x), str(r.y), str(r.width),
                       str(r.height), repr(float(r.mpp)), r.split])
        )
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> TileManifest:
    schema_version = MANIFEST_SCHEMA_VERSION
    header_seen = False
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("schema_version="):
                schema_version = int(body.split("=", 1)[1])
            continue
        fields = line.split("\t")
        if not header_seen:
            if tuple(fields) != MANIFEST_COLUMNS:
                raise ManifestError(f"line {lineno}: bad manifest header {fields!r}")
            header_seen = True
            continue
        if len(fields) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(fields)}")
        tile_id, slide_id, group, x, y, w, h, mpp, split = fields
        try:
            rec = TileRecord(tile_id, slide_id, group, int(x), int(y), int(w), int(h), float(mpp), split)
        except ValueError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
        entries.append(rec)
    if not header_seen:
        raise ManifestError("manifest has no header line")
    if schema_version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(f"unsupported manifest schema version {schema_version}")
    return TileManifest(tuple(entries), schema_version)


def save_manifest(manifest: TileManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_manifest(manifest))


def load_manifest(path) -> TileManifest:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def apportion(counts: dict[str, int], n: int) -> dict[str, int]:
    """Largest-remainder (Hamilton) apportionment of ``n`` over group sizes.

    Ties in the fractional remainder go to the lexicographically smaller group id.
    Exact integer arithmetic: quota_g = n * size_g / total.
    """
    total = sum(counts.values())
    if n > total:
        raise QuotaError(f"requested {n} entries from a population of {total}")
    quotas = {}
    remainders = []
    for g in sorted(counts):
        q, r = divmod(n * counts[g], total)
        quotas[g] = q
        remainders.append((-r, g))
    leftover = n - sum(quotas.values())
    for _, g in sorted(remainders)[:leftover]:
        quotas[g] += 1
    return quotas


def stratified_sample(manifest: TileManifest, n: int, seed: int) -> TileManifest:
    """Draw ``n`` entries with per-group counts proportional to group shares.

    Within a group the draw is uniform without replacement. Groups are visited
    in sorted order, each with its own generator keyed on ``(seed, group index)``,
    so the result does not depend on manifest order or on the caller's threads.
    Selected entries keep their original manifest order.
    """
    if n < 0:
        raise UsageError("n must be non-negative")
    if any(not rec.group for rec in manifest.entries):
        raise ManifestError("every entry needs a non-empty group for stratification")
    counts = manifest.groups()
    quotas = apportion(counts, n)
    members: dict[str, list[int]] = {g: [] for g in counts}
    for i, rec in enumerate(manifest.entries):
        members[rec.group].append(i)
    chosen = []
    for gi, g in enumerate(sorted(counts)):
        quota = quotas[g]
        if quota > len(members[g]):
            raise QuotaError(f"group {g!r} quota {quota} exceeds its size {len(members[g])}", group=g)
        rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), gi]))
        picks = rng.choice(len(members[g]), size=quota, replace=False)
        chosen.extend(members[g][p] for p in picks)
    chosen.sort()
    return replace(manifest, entries=tuple(manifest.entries[i] for i in chosen))


@dataclass(frozen=True, eq=False)
class PairedSets:
    """Candidate rows aligned to reference rows through ``pairing``."""

    reference: EmbeddingSet
    candidate: EmbeddingSet
    pairing: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.reference.dim != self.candidate.dim:
            raise UsageError(f"dim mismatch: {self.reference.dim} vs {self.candidate.dim}")
        pairing = self.pairing
        if pairing is None:
            pairing = np.arange(self.candidate.rows)
        pairing = np.asarray(pairing, dtype=np.int64).copy()
        if pairing.shape != (self.candidate.rows,):
            raise UsageError("pairing must map every candidate row")
        if pairing.size and (pairing.min() < 0 or pairing.max() >= self.reference.rows):
            raise UsageError("pairing index out of reference range")
        pairing.setflags(write=False)
        object.__setattr__(self, "pairing", pairing)

    def aligned_reference(self) -> np.ndarray:
        return self.reference.data[self.pairing]


def _index_ids(ids: Sequence[str], what: str) -> dict[str, int]:
    index = {}
    for i, tid in enumerate(ids):
        if tid in index:
            raise PairingError(f"duplicate id {tid!r} in {what} ids", tile_id=tid)
        index[tid] = i
    return index


def pair_by_id(
    reference: EmbeddingSet,
    reference_ids: Iterable[str],
    candidate: EmbeddingSet,
    candidate_ids: Iterable[str],
) -> PairedSets:
    reference_ids = list(reference_ids)
    candidate_ids = list(candidate_ids)
    if len(reference_ids) != reference.rows or len(candidate_ids) != candidate.rows:
        raise PairingError("id list length does not match embedding row count")
    ref_index = _index_ids(reference_ids, "reference")
    _index_ids(candidate_ids, "candidate")
    pairing = []
    for tid in candidate_ids:
        if tid not in ref_index:
            raise PairingError(f"candidate id {tid!r} has no reference row", tile_id=tid)
        pairing.append(ref_index[tid])
    return PairedSets(reference, candidate, np.array(pairing, dtype=np.int64))


def read_id_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def write_id_list(ids: Iterable[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tid in ids:
            fh.write(f"{tid}\n")


def embeddings_to_bytes(emb: EmbeddingSet) -> bytes:
    buf = io.BytesIO()
    write_embeddings(emb, buf)
    return buf.getvalue()
