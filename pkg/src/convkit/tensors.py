"""Dense tensor helpers with one fixed axis convention.

Weight tensors are 4-D float32 arrays in axis order (n, k_w, k_h, c):
output channels, kernel width, kernel height, input channels. Feature
maps are 3-D float32 arrays in axis order (W, H, channels). Every
reshape in this module is row-major relative to those orders; the
(k_w, k_h) kernel block flattens x-major, i.e. index x * k_h + y.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ValidationError


def as_tensor4(data, dims=None) -> np.ndarray:
    """Coerce to a float32 4-D tensor, optionally checking extents."""
    t = np.asarray(data, dtype=np.float32)
    if dims is not None:
        t = t.reshape(dims)
    if t.ndim != 4:
        raise ValidationError(f"expected a 4-D tensor, got ndim={t.ndim}")
    return t


def check_finite(a: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains non-finite values")
    return a


def channel_slice(t: np.ndarray, i: int) -> np.ndarray:
    """Slice input channel i of a (n, k_w, k_h, c) tensor as an
    (n, k_w*k_h) matrix, kernel block flattened x-major."""
    c = t.shape[3]
    if not 0 <= i < c:
        raise ValidationError(
            f"channel index {i} out of range for input-channel axis of extent {c}"
        )
    n, kw, kh, _ = t.shape
    return np.ascontiguousarray(t[:, :, :, i]).reshape(n, kw * kh)


def assemble_channels(mats: list[np.ndarray], kw: int, kh: int) -> np.ndarray:
    """Inverse of channel_slice over all channels: stack c matrices of
    shape (n, kw*kh) back into an (n, kw, kh, c) tensor."""
    if not mats:
        raise ValidationError("cannot assemble an empty channel list")
    n = mats[0].shape[0]
    stacked = np.stack([m.reshape(n, kw, kh) for m in mats], axis=3)
    return stacked.astype(np.float32)


def frobenius_norm(t: np.ndarray) -> float:
    """Frobenius norm with 64-bit accumulation."""
    a = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def matricize(t: np.ndarray, row_axes: tuple[int, ...], col_axes: tuple[int, ...]) -> np.ndarray:
    """Permute axes into (row_axes, col_axes) order and flatten each
    group row-major. Explicit generalization of Reshape with a declared
    axis order."""
    axes = tuple(row_axes) + tuple(col_axes)
    if sorted(axes) != list(range(t.ndim)):
        raise ValidationError(f"axis groups {row_axes}+{col_axes} do not cover ndim={t.ndim}")
    p = np.transpose(t, axes)
    rows = int(np.prod([t.shape[a] for a in row_axes], dtype=np.int64)) if row_axes else 1
    cols = int(np.prod([t.shape[a] for a in col_axes], dtype=np.int64)) if col_axes else 1
    return np.ascontiguousarray(p).reshape(rows, cols)


def dematricize(
    m: np.ndarray,
    row_axes: tuple[int, ...],
    col_axes: tuple[int, ...],
    dims: tuple[int, ...],
) -> np.ndarray:
    """Inverse of matricize back to a tensor with the given extents."""
    axes = tuple(row_axes) + tuple(col_axes)
    if sorted(axes) != list(range(len(dims))):
        raise ValidationError(f"axis groups {row_axes}+{col_axes} do not cover dims {dims}")
    expected = int(np.prod(dims, dtype=np.int64))
    if m.size != expected:
        raise ValidationError(f"element count mismatch: matrix has {m.size}, dims need {expected}")
    grouped = m.reshape([dims[a] for a in axes])
    inverse = np.argsort(axes)
    return np.ascontiguousarray(np.transpose(grouped, inverse))


def reshape_rowmajor(a: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Row-major reshape with an explicit element-count check."""
    expected = int(np.prod(shape, dtype=np.int64))
    if a.size != expected:
        raise ValidationError(f"cannot reshape {a.size} elements into {shape}")
    return a.reshape(shape)
