"""Memory-bank construction, persistence, and summary statistics.

A bank is an ordered, immutable collection of image feature maps, each
keyed by one or more encoded captions. Banks are built from a JSON-lines
manifest and stored in the MBNK binary container:

    magic "MBNK" | u32 format version |
    u32 D | u32 N | u32 H | u32 W | u32 entry count |
    u32 length + UTF-8 encoder version |
    entries ... |
    u32 CRC32 of every preceding byte

Each entry: D*H*W f64 feature map (row-major) | D f64 global mean |
u32 caption count | per caption: u32 length + UTF-8 text | D f64 sentence
vector | N*D f64 word matrix (row-major) | N mask bytes (0 pad / 1 real).
All integers and floats are little-endian. docs/formats.md carries a
hex-annotated example.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from membank.features import (
    Caption,
    EncodingError,
    GlobalImageFeature,
    ImageFeatureMap,
    SentenceFeature,
    WordEmbeddings,
    encoder_version,
    toy_image_encoder,
    toy_text_encoder,
)
from membank.ppm import PpmError, read_ppm
from membank.tensor_ops import NumericError, ShapeError, as_tensor, spatial_mean

MAGIC = b"MBNK"
FORMAT_VERSION = 1

DEFAULT_DIMS = (32, 16, 4, 4)  # (feat_dim, max_words, map_h, map_w)


class BankBuildError(ValueError):
    """A manifest record failed validation during bank construction."""


class BankFormatError(ValueError):
    """An MBNK file is malformed; the message carries a byte offset."""


@dataclass(frozen=True)
class BankMeta:
    feat_dim: int
    max_words: int
    map_h: int
    map_w: int
    encoder_version: str


@dataclass(frozen=True)
class MemoryEntry:
    entry_id: int
    features: ImageFeatureMap
    global_feature: GlobalImageFeature
    captions: tuple[Caption, ...]


@dataclass(frozen=True)
class MemoryBank:
    meta: BankMeta
    entries: tuple[MemoryEntry, ...]

    @property
    def count(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ManifestRecord:
    index: int
    captions: tuple[str, ...]
    features_path: Path | None = None
    image_path: Path | None = None


@dataclass(frozen=True)
class BankStats:
    entry_count: int
    caption_count: int
    feat_dim: int
    max_words: int
    map_h: int
    map_w: int
    encoder_version: str
    channel_min: np.ndarray  # (feat_dim,) min over all entries and positions
    channel_max: np.ndarray


def read_manifest(path) -> list[ManifestRecord]:
    """Parse a JSON-lines ingestion manifest.

    Each non-blank line is an object with "captions" (non-empty list of
    strings) and exactly one of "features" (raw f64 blob path) or "image"
    (binary PPM path). Paths are resolved relative to the manifest file.
    """
    manifest_path = Path(path)
    base = manifest_path.parent
    records: list[ManifestRecord] = []
    for line_no, line in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        index = len(records)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BankBuildError(f"record {index} (line {line_no}): invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise BankBuildError(f"record {index} (line {line_no}): expected an object")
        captions = obj.get("captions")
        if not isinstance(captions, list) or not captions or not all(
            isinstance(c, str) for c in captions
        ):
            raise BankBuildError(
                f"record {index} (line {line_no}): 'captions' must be a non-empty list of strings"
            )
        has_features = "features" in obj
        has_image = "image" in obj
        if has_features == has_image:
            raise BankBuildError(
                f"record {index} (line {line_no}): need exactly one of 'features' or 'image'"
            )
        records.append(
            ManifestRecord(
                index=index,
                captions=tuple(captions),
                features_path=base / obj["features"] if has_features else None,
                image_path=base / obj["image"] if has_image else None,
            )
        )
    return records


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _freeze_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.ascontiguousarray(mask, dtype=bool)
    mask.flags.writeable = False
    return mask


def _load_feature_blob(path: Path, feat_dim: int, map_h: int, map_w: int) -> np.ndarray:
    expected = feat_dim * map_h * map_w * 8
    raw = path.read_bytes()
    if len(raw) != expected:
        raise ShapeError(
            f"feature blob {path.name}: expected {expected} bytes "
            f"({feat_dim}x{map_h}x{map_w} f64), got {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype="<f8").reshape(feat_dim, map_h, map_w)
    return as_tensor(arr, name=f"feature blob {path.name}")


def build_bank(
    records: list[ManifestRecord],
    feat_dim: int = DEFAULT_DIMS[0],
    max_words: int = DEFAULT_DIMS[1],
    map_h: int = DEFAULT_DIMS[2],
    map_w: int = DEFAULT_DIMS[3],
    seed: int = 0,
) -> MemoryBank:
    """Build an immutable bank from manifest records, in manifest order.

    Every caption is encoded with the toy text encoder; the per-entry
    global feature is precomputed. Any validation failure raises
    BankBuildError naming the offending record index.
    """
    if not records:
        raise BankBuildError("manifest references no records")
    version = encoder_version(seed)
    entries: list[MemoryEntry] = []
    for rec in records:
        try:
            if not rec.captions:
                raise ValueError("caption list is empty")
            if rec.features_path is not None:
                fmap = _load_feature_blob(rec.features_path, feat_dim, map_h, map_w)
            else:
                pixels = read_ppm(rec.image_path)
                fmap = toy_image_encoder(pixels, feat_dim, map_h, map_w, seed).data
            captions = []
            for text in rec.captions:
                sentence, words = toy_text_encoder(text, feat_dim, max_words, seed)
                captions.append(
                    Caption(
                        text=text,
                        sentence=SentenceFeature(vec=_freeze(sentence.vec)),
                        words=WordEmbeddings(vecs=_freeze(words.vecs), mask=_freeze_mask(words.mask)),
                    )
                )
        except (ShapeError, NumericError, EncodingError, PpmError, OSError, ValueError) as exc:
            raise BankBuildError(f"record {rec.index}: {exc}") from exc
        entries.append(
            MemoryEntry(
                entry_id=len(entries),
                features=ImageFeatureMap(data=_freeze(fmap)),
                global_feature=GlobalImageFeature(vec=_freeze(spatial_mean(fmap))),
                captions=tuple(captions),
            )
        )
    meta = BankMeta(
        feat_dim=feat_dim,
        max_words=max_words,
        map_h=map_h,
        map_w=map_w,
        encoder_version=version,
    )
    return MemoryBank(meta=meta, entries=tuple(entries))


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_bank(bank: MemoryBank, path) -> int:
    """Serialize a bank to the MBNK container. Returns the payload CRC32."""
    meta = bank.meta
    parts = [
        MAGIC,
        struct.pack(
            "<IIIIII",
            FORMAT_VERSION,
            meta.feat_dim,
            meta.max_words,
            meta.map_h,
            meta.map_w,
            bank.count,
        ),
        _pack_str(meta.encoder_version),
    ]
    for entry in bank.entries:
        parts.append(entry.features.data.astype("<f8").tobytes())
        parts.append(entry.global_feature.vec.astype("<f8").tobytes())
        parts.append(struct.pack("<I", len(entry.captions)))
        for cap in entry.captions:
            parts.append(_pack_str(cap.text))
            parts.append(cap.sentence.vec.astype("<f8").tobytes())
            parts.append(cap.words.vecs.astype("<f8").tobytes())
            parts.append(cap.words.mask.astype(np.uint8).tobytes())
    payload = b"".join(parts)
    crc = zlib.crc32(payload)
    Path(path).write_bytes(payload + struct.pack("<I", crc))
    return crc


class _Reader:
    """Cursor over raw bytes; every failure reports the current offset."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise BankFormatError(
                f"truncated {what}: needed {n} bytes at byte offset {self.offset}"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def floats(self, count: int, what: str) -> np.ndarray:
        raw = self.take(count * 8, what)
        return np.frombuffer(raw, dtype="<f8").copy()

    def string(self, what: str) -> str:
        length = self.u32(f"{what} length")
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BankFormatError(
                f"invalid UTF-8 in {what} at byte offset {self.offset - length}"
            ) from exc


def load_bank(path) -> MemoryBank:
    """Load and validate an MBNK file; the inverse of save_bank, bit-exactly."""
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "header")
    if magic != MAGIC:
        raise BankFormatError(f"bad magic {magic!r} at byte offset 0")
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise BankFormatError(f"unsupported format version {version} at byte offset 4")
    feat_dim = r.u32("feat_dim")
    max_words = r.u32("max_words")
    map_h = r.u32("map_h")
    map_w = r.u32("map_w")
    count = r.u32("entry count")
    enc_version = r.string("encoder version")

    entries: list[MemoryEntry] = []
    for entry_id in range(count):
        fmap = r.floats(feat_dim * map_h * map_w, f"entry {entry_id} features").reshape(
            feat_dim, map_h, map_w
        )
        gvec = r.floats(feat_dim, f"entry {entry_id} global feature")
        n_caps = r.u32(f"entry {entry_id} caption count")
        if n_caps == 0:
            raise BankFormatError(
                f"entry {entry_id} has zero captions at byte offset {r.offset - 4}"
            )
        captions = []
        for ci in range(n_caps):
            what = f"entry {entry_id} caption {ci}"
            text = r.string(f"{what} text")
            svec = r.floats(feat_dim, f"{what} sentence")
            wvecs = r.floats(max_words * feat_dim, f"{what} words").reshape(max_words, feat_dim)
            mask_off = r.offset
            mask_raw = np.frombuffer(r.take(max_words, f"{what} mask"), dtype=np.uint8)
            if not np.isin(mask_raw, (0, 1)).all():
                raise BankFormatError(f"invalid mask byte in {what} at byte offset {mask_off}")
            captions.append(
                Caption(
                    text=text,
                    sentence=SentenceFeature(vec=_freeze(svec)),
                    words=WordEmbeddings(vecs=_freeze(wvecs), mask=_freeze_mask(mask_raw == 1)),
                )
            )
        entries.append(
            MemoryEntry(
                entry_id=entry_id,
                features=ImageFeatureMap(data=_freeze(fmap)),
                global_feature=GlobalImageFeature(vec=_freeze(gvec)),
                captions=tuple(captions),
            )
        )

    crc_offset = r.offset
    stored_crc = r.u32("checksum")
    if r.offset != len(data):
        raise BankFormatError(f"trailing garbage at byte offset {r.offset}")
    actual_crc = zlib.crc32(data[:crc_offset])
    if stored_crc != actual_crc:
        raise BankFormatError(
            f"checksum mismatch at byte offset {crc_offset}: "
            f"stored {stored_crc:08x}, computed {actual_crc:08x}"
        )
    meta = BankMeta(
        feat_dim=feat_dim,
        max_words=max_words,
        map_h=map_h,
        map_w=map_w,
        encoder_version=enc_version,
    )
    return MemoryBank(meta=meta, entries=tuple(entries))


def bank_stats(bank: MemoryBank) -> BankStats:
    """Summary record: counts, dimensions, and per-channel value ranges."""
    meta = bank.meta
    caption_count = sum(len(e.captions) for e in bank.entries)
    if bank.entries:
        stacked = np.stack([e.features.data for e in bank.entries])  # (n, D, H, W)
        channel_min = stacked.min(axis=(0, 2, 3))
        channel_max = stacked.max(axis=(0, 2, 3))
    else:
        channel_min = np.full(meta.feat_dim, np.nan)
        channel_max = np.full(meta.feat_dim, np.nan)
    return BankStats(
        entry_count=bank.count,
        caption_count=caption_count,
        feat_dim=meta.feat_dim,
        max_words=meta.max_words,
        map_h=meta.map_h,
        map_w=meta.map_w,
        encoder_version=meta.encoder_version,
        channel_min=channel_min,
        channel_max=channel_max,
    )
