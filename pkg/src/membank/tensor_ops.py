"""Dense float64 array primitives shared by the retrieval and GAN modules.

All functions are pure, take array-likes, and return C-order float64 numpy
arrays (or plain floats). Shape violations raise :class:`ShapeError`;
non-finite values at external boundaries raise :class:`NumericError`.
"""

from __future__ import annotations

import math

import numpy as np

# Norms below this are treated as degenerate (zero vector) by cosine().
NORM_EPS = 1e-12

# Negative-side slope of the leaky rectifier. The derivative at exactly 0
# is taken to be the slope as well (measure-zero choice).
LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """A value that must be finite is NaN or infinite."""


def as_tensor(data, shape=None, name: str = "tensor") -> np.ndarray:
    """Validate external numeric data into a contiguous float64 array.

    Rejects NaN/Inf with NumericError and, when `shape` is given, any
    mismatching shape with ShapeError.
    """
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise NumericError(f"{name}: non-finite values rejected")
    return np.ascontiguousarray(arr)


def matmul(a, b) -> np.ndarray:
    """Matrix product of two 2-D arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected two matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def row_softmax(a) -> np.ndarray:
    """Softmax along the last axis of a matrix, one distribution per row.

    Stabilized by per-row max subtraction; every output row is nonnegative
    and sums to 1.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"row_softmax: expected a matrix, got shape {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cosine(a, b) -> float:
    """Cosine similarity of two equal-length vectors.

    If either operand has norm below NORM_EPS the pair is degenerate and
    the similarity is defined as 0.0 (maximally non-matching) instead of
    raising.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"cosine: expected equal-length vectors, got {a.shape} and {b.shape}")
    norm_a = math.sqrt(float(np.dot(a, a)))
    norm_b = math.sqrt(float(np.dot(b, b)))
    if norm_a < NORM_EPS or norm_b < NORM_EPS:
        return 0.0
    return float(np.dot(a, b)) / (norm_a * norm_b)


def is_degenerate(a) -> bool:
    """True when a vector's L2 norm falls below the cosine guard threshold."""
    a = np.asarray(a, dtype=np.float64)
    return math.sqrt(float(np.dot(a, a))) < NORM_EPS


def spatial_mean(fmap) -> np.ndarray:
    """Per-channel mean over all spatial positions of a C x H x W map.

    Each channel is reduced with math.fsum (correctly rounded), so the
    result is bit-identical under any spatial permutation of the input.
    """
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3:
        raise ShapeError(f"spatial_mean: expected a C x H x W map, got shape {fmap.shape}")
    channels, height, width = fmap.shape
    positions = height * width
    flat = fmap.reshape(channels, positions)
    return np.array([math.fsum(row) / positions for row in flat.tolist()])


def pool2d(x, kind: str, kernel: int, stride: int) -> np.ndarray:
    """Strided 2-D pooling over the spatial axes of a C x H x W map.

    No padding: output height is floor((H - kernel) / stride) + 1, same for
    width. `kind` is "average" or "max"; channels are pooled independently.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"pool2d: expected a C x H x W map, got shape {x.shape}")
    if kernel < 1 or stride < 1:
        raise ValueError(f"pool2d: kernel and stride must be positive, got {kernel}, {stride}")
    _, height, width = x.shape
    if kernel > height or kernel > width:
        raise ShapeError(f"pool2d: kernel {kernel} exceeds input extent {height}x{width}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    if kind == "average":
        out = windows.mean(axis=(-2, -1))
    elif kind == "max":
        out = windows.max(axis=(-2, -1))
    else:
        raise ValueError(f"pool2d: unknown kind {kind!r}")
    return np.ascontiguousarray(out)


def flatten_rows(a) -> np.ndarray:
    """Row-major flattening of a matrix into a vector.

    The inverse reshape recovers the input exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"flatten_rows: expected a matrix, got shape {a.shape}")
    return np.ascontiguousarray(a).reshape(-1)


def leaky_relu(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, x, LEAKY_SLOPE * x)


def leaky_relu_gate(pre) -> np.ndarray:
    """Pointwise derivative of leaky_relu at the given preactivations."""
    pre = np.asarray(pre, dtype=np.float64)
    return np.where(pre > 0.0, 1.0, LEAKY_SLOPE)
