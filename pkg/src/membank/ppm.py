"""Minimal binary PPM (P6, 8-bit) reader and writer.

Used for manifest image ingestion and for sample grids emitted by the
training harness. Pixel values map linearly between bytes 0..255 and
floats 0..1.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PpmError(ValueError):
    """Malformed PPM content."""


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (3, H, W) float array in [0, 1] as binary PPM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise PpmError(f"expected a 3 x H x W array, got shape {img.shape}")
    _, height, width = img.shape
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    # PPM stores pixels interleaved row by row: RGB RGB ...
    body = pixels.transpose(1, 2, 0).tobytes()
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + body)


def _read_header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data) and data[pos : pos + 1].isspace():
        pos += 1
    if pos < len(data) and data[pos : pos + 1] == b"#":
        while pos < len(data) and data[pos : pos + 1] != b"\n":
            pos += 1
        return _read_header_token(data, pos)
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise PpmError("truncated PPM header")
    return data[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a (3, H, W) float array in [0, 1]."""
    data = Path(path).read_bytes()
    magic, pos = _read_header_token(data, 0)
    if magic != b"P6":
        raise PpmError(f"not a binary PPM (magic {magic!r})")
    width_tok, pos = _read_header_token(data, pos)
    height_tok, pos = _read_header_token(data, pos)
    maxval_tok, pos = _read_header_token(data, pos)
    try:
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as exc:
        raise PpmError("non-numeric PPM header field") from exc
    if maxval != 255:
        raise PpmError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    body = data[pos : pos + expected]
    if len(body) != expected:
        raise PpmError(f"truncated PPM body: expected {expected} bytes, got {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0
