"""Text and image feature types plus deterministic toy encoders.

The toy encoders stand in for pretrained feature extractors at desk scale.
Their pseudo-randomness comes from a SHA-256 counter stream keyed by
(seed, domain, token bytes), so byte-identical inputs produce bit-identical
features on every run and platform. The stream algorithm is frozen; see
docs/formats.md for the exact byte layout.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass

import numpy as np

from membank.tensor_ops import NORM_EPS, NumericError, ShapeError, as_tensor

# Encoder family identifier. Bump when the stream algorithm or tokenization
# changes; banks store the full version string and queries against a bank
# built by an unknown version are rejected.
ENCODER_FAMILY = "toy-1"

_VERSION_RE = re.compile(r"^(?P<family>[A-Za-z0-9.-]+);seed=(?P<seed>-?\d+)$")

_WORD_DOMAIN = b"\x00word\x00"
_PROJ_DOMAIN = b"\x00proj\x00"


class EncodingError(ValueError):
    """Input text cannot be encoded (empty after tokenization)."""


def encoder_version(seed: int) -> str:
    """Full version string recorded in bank metadata, e.g. "toy-1;seed=7"."""
    return f"{ENCODER_FAMILY};seed={seed}"


def parse_encoder_version(version: str) -> int:
    """Return the seed embedded in a version string produced by this family.

    Raises ValueError for any other family or malformed string.
    """
    m = _VERSION_RE.match(version)
    if m is None or m.group("family") != ENCODER_FAMILY:
        raise ValueError(f"unsupported encoder version {version!r}")
    return int(m.group("seed"))


@dataclass(frozen=True)
class SentenceFeature:
    """Single-vector summary of a caption; unit L2 norm when toy-encoded."""

    vec: np.ndarray  # (feat_dim,)


@dataclass(frozen=True)
class WordEmbeddings:
    """Fixed-size per-word vectors with explicit padding.

    `vecs` is (max_words, feat_dim); rows where `mask` is False are padding
    and are exactly zero.
    """

    vecs: np.ndarray
    mask: np.ndarray  # (max_words,) bool, True at real word positions


@dataclass(frozen=True)
class ImageFeatureMap:
    """Deep-feature grid for one image, shaped (feat_dim, map_h, map_w)."""

    data: np.ndarray


@dataclass(frozen=True)
class GlobalImageFeature:
    """Spatial mean of an ImageFeatureMap; one value per channel."""

    vec: np.ndarray  # (feat_dim,)


@dataclass(frozen=True)
class Caption:
    """Caption text together with its encoded sentence and word features."""

    text: str
    sentence: SentenceFeature
    words: WordEmbeddings


def _stream_values(seed: int, domain: bytes, key: bytes, count: int) -> np.ndarray:
    """`count` doubles in [-1, 1) from the frozen SHA-256 counter stream.

    Block i is SHA256(seed_le8 || domain || key || i_le4); each 8-byte
    little-endian word of the digest contributes its top 53 bits as
    u / 2**53, mapped to 2u - 1.
    """
    prefix = seed.to_bytes(8, "little", signed=True) + domain + key
    out = np.empty(count, dtype=np.float64)
    filled = 0
    counter = 0
    while filled < count:
        digest = hashlib.sha256(prefix + counter.to_bytes(4, "little")).digest()
        for off in range(0, 32, 8):
            if filled >= count:
                break
            bits = int.from_bytes(digest[off : off + 8], "little") >> 11
            out[filled] = 2.0 * (bits * 2.0**-53) - 1.0
            filled += 1
        counter += 1
    return out


def token_vector(seed: int, token: str, feat_dim: int) -> np.ndarray:
    """The fixed pseudo-random vector assigned to one token."""
    return _stream_values(seed, _WORD_DOMAIN, token.encode("utf-8"), feat_dim)


def toy_text_encoder(
    text: str, feat_dim: int, max_words: int, seed: int
) -> tuple[SentenceFeature, WordEmbeddings]:
    """Encode text into a sentence vector and padded word embeddings.

    Tokenization is lowercase whitespace splitting, truncated to
    `max_words`. Each token maps to a fixed stream-derived vector in
    [-1, 1)^feat_dim; rows past the token count stay zero with a False
    mask. The sentence vector is the L2-normalized sum of the real word
    vectors, accumulated with correctly-rounded summation so that token
    order never changes the result.
    """
    if feat_dim < 1 or max_words < 1:
        raise ValueError("feat_dim and max_words must be >= 1")
    tokens = text.lower().split()
    if not tokens:
        raise EncodingError("text has no tokens after whitespace splitting")
    tokens = tokens[:max_words]

    vecs = np.zeros((max_words, feat_dim), dtype=np.float64)
    mask = np.zeros(max_words, dtype=bool)
    for i, tok in enumerate(tokens):
        vecs[i] = token_vector(seed, tok, feat_dim)
        mask[i] = True

    real_rows = vecs[: len(tokens)].T.tolist()
    total = np.array([math.fsum(dim_values) for dim_values in real_rows])
    norm = math.sqrt(float(np.dot(total, total)))
    if norm < NORM_EPS:
        raise NumericError("sentence vector degenerated to zero norm")
    sentence = SentenceFeature(vec=total / norm)
    return sentence, WordEmbeddings(vecs=vecs, mask=mask)


def toy_image_encoder(
    image, feat_dim: int, map_h: int, map_w: int, seed: int = 0
) -> ImageFeatureMap:
    """Encode a 3-channel pixel array into a (feat_dim, map_h, map_w) map.

    The image is partitioned into map_h x map_w equal cells; per cell the
    three channel means are computed and expanded to feat_dim channels by a
    fixed stream-derived projection matrix.
    """
    img = as_tensor(image, name="image")
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"image must be 3 x H x W, got shape {img.shape}")
    _, img_h, img_w = img.shape
    if map_h < 1 or map_w < 1:
        raise ValueError("map_h and map_w must be >= 1")
    if img_h % map_h != 0 or img_w % map_w != 0:
        raise ShapeError(
            f"image extent {img_h}x{img_w} not divisible into {map_h}x{map_w} cells"
        )
    block_h = img_h // map_h
    block_w = img_w // map_w
    cells = img.reshape(3, map_h, block_h, map_w, block_w).mean(axis=(2, 4))
    projection = _stream_values(seed, _PROJ_DOMAIN, b"", feat_dim * 3).reshape(feat_dim, 3)
    return ImageFeatureMap(data=np.einsum("dc,chw->dhw", projection, cells))
