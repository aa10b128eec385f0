"""Factorization of convolutional layers.

Three schemes operate purely on pretrained weights, no data required:

* depthwise+pointwise factorization via per-input-channel truncated SVD
  (the main scheme, ``dac_decompose``),
* channel decomposition (thin conv followed by a pointwise layer),
* spatial decomposition (horizontal k_w x 1 filters followed by
  vertical 1 x k_h filters),

plus ``match_rank``, which converts a depthwise rank r into the filter
count c' that puts the baseline schemes at the same MAC budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .svd import svd, svd_truncate, truncation_error
from .tensors import (
    as_tensor4,
    channel_slice,
    check_finite,
    dematricize,
    frobenius_norm,
    matricize,
)


@dataclass(frozen=True)
class ConvWeights:
    """An ordinary convolutional layer: weights (n, k_w, k_h, c)."""

    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "weights", as_tensor4(self.weights))
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float32)
            if b.shape != (self.weights.shape[0],):
                raise ValidationError(
                    f"bias length {b.shape} does not match {self.weights.shape[0]} filters"
                )
            object.__setattr__(self, "bias", b)
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ValidationError(f"bad stride/padding: {self.stride}, {self.padding}")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[1], self.weights.shape[2]

    @property
    def c(self) -> int:
        return self.weights.shape[3]


@dataclass(frozen=True)
class DepthwiseWeights:
    """Depthwise layer with channel multiplier r: weights (r*c, k_w, k_h, 1).

    Output channel i*r + t belongs to input channel i. Depthwise layers
    carry no bias.
    """

    weights: np.ndarray
    multiplier: int
    channels: int
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "weights", as_tensor4(self.weights))
        rc, _, _, one = self.weights.shape
        if one != 1:
            raise ValidationError("depthwise weights must have a single input-channel slot")
        if rc != self.multiplier * self.channels:
            raise ValidationError(
                f"depthwise extent {rc} != multiplier {self.multiplier} * channels {self.channels}"
            )

    @property
    def rc(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class PointwiseWeights:
    """1x1 channel-mixing layer: weights (n, 1, 1, rC)."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", as_tensor4(self.weights))
        if self.weights.shape[1] != 1 or self.weights.shape[2] != 1:
            raise ValidationError(f"pointwise kernel must be 1x1, got {self.weights.shape[1:3]}")
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float32)
            if b.shape != (self.weights.shape[0],):
                raise ValidationError("pointwise bias length mismatch")
            object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class DecomposedPair:
    depthwise: DepthwiseWeights
    pointwise: PointwiseWeights
    rank: int
    reconstruction_error: float

    def __post_init__(self):
        if self.depthwise.rc != self.pointwise.weights.shape[3]:
            raise ValidationError("depthwise output channels != pointwise input channels")


@dataclass(frozen=True)
class ChannelPair:
    """Channel decomposition result: thin conv then pointwise."""

    first: ConvWeights  # (c', k_w, k_h, c)
    second: PointwiseWeights  # (n, 1, 1, c')
    filters: int
    reconstruction_error: float


@dataclass(frozen=True)
class SpatialPair:
    """Spatial decomposition result: horizontal then vertical filters."""

    horizontal: ConvWeights  # (c', k_w, 1, c)
    vertical: ConvWeights  # (n, 1, k_h, c')
    filters: int
    reconstruction_error: float


def max_rank(scheme: str, n: int, kw: int, kh: int, c: int) -> int:
    """Largest admissible rank / filter count for a scheme on this shape."""
    if scheme == "dac":
        return min(n, kw * kh)
    if scheme == "channel":
        return min(n, kw * kh * c)
    if scheme == "spatial":
        return min(kw * c, kh * n)
    raise ValidationError(f"unknown scheme {scheme!r}")


def dac_decompose(layer: ConvWeights, r: int) -> DecomposedPair:
    """Factor a conv layer into a depthwise + pointwise pair of rank r.

    For each input channel i the (n, k_w*k_h) slab M_i is approximated
    by its truncated SVD; the right factor becomes r depthwise kernels,
    the left factor (singular values merged in) becomes r pointwise
    columns. Channel-major interleaving: slot i*r + t carries channel
    i's rank-t component on both sides.
    """
    t = check_finite(layer.weights, "conv weights")
    n, kw, kh, c = t.shape
    if n == 0 or c == 0:
        raise ValidationError(f"degenerate layer extents {t.shape}")
    bound = min(n, kw * kh)
    if not 1 <= r <= bound:
        raise ValidationError(f"rank {r} out of range [1, {bound}] for shape {t.shape}")

    rc = r * c
    td = np.zeros((rc, kw, kh, 1), dtype=np.float32)
    ts = np.zeros((n, 1, 1, rc), dtype=np.float32)
    for i in range(c):
        m = channel_slice(t, i)
        ur, sr, vr = svd_truncate(svd(m), r)
        s_fac = ur * sr  # singular values merged into the pointwise factor
        td[i * r : (i + 1) * r, :, :, 0] = vr.reshape(r, kw, kh)
        ts[:, 0, 0, i * r : (i + 1) * r] = s_fac

    depthwise = DepthwiseWeights(
        weights=td,
        multiplier=r,
        channels=c,
        stride=layer.stride,
        padding=layer.padding,
    )
    pointwise = PointwiseWeights(weights=ts, bias=layer.bias)
    pair = DecomposedPair(depthwise, pointwise, r, 0.0)
    err = frobenius_norm(t.astype(np.float64) - reconstruct(pair).astype(np.float64))
    return DecomposedPair(depthwise, pointwise, r, err)


def reconstruct(pair: DecomposedPair) -> np.ndarray:
    """Compose a depthwise+pointwise pair back into one conv weight
    tensor: That[j,x,y,i] = sum_t Ts[j,0,0,i*r+t] * Td[i*r+t,x,y,0]."""
    td = pair.depthwise.weights
    ts = pair.pointwise.weights
    r, c = pair.rank, pair.depthwise.channels
    n = ts.shape[0]
    kw, kh = td.shape[1], td.shape[2]
    if ts.shape[3] != r * c or td.shape[0] != r * c:
        raise ValidationError("pair extents inconsistent with rank and channel count")
    d = td[:, :, :, 0].reshape(c, r, kw, kh).astype(np.float64)
    s = ts[:, 0, 0, :].reshape(n, c, r).astype(np.float64)
    out = np.einsum("jit,itxy->jxyi", s, d)
    return out.astype(np.float32)


def channel_decompose(layer: ConvWeights, c_prime: int) -> ChannelPair:
    """Split a conv layer into a thin conv (c' filters, full kernel)
    plus a pointwise layer, via truncated SVD of the filter matrix.

    Data-free filter reconstruction: no activation statistics are used.
    """
    t = check_finite(layer.weights, "conv weights")
    n, kw, kh, c = t.shape
    bound = max_rank("channel", n, kw, kh, c)
    if not 1 <= c_prime <= bound:
        raise ValidationError(f"filter count {c_prime} out of range [1, {bound}]")

    # B[(x*kh + y)*c + i, j] = T[j, x, y, i]
    b = matricize(t, (1, 2, 3), (0,))
    res = svd(b)
    ur, sr, vr = svd_truncate(res, c_prime)

    first_w = dematricize(
        ur.astype(np.float32), (1, 2, 3), (0,), (c_prime, kw, kh, c)
    )
    second_w = (sr[:, None] * vr).T.reshape(n, 1, 1, c_prime).astype(np.float32)
    first = ConvWeights(first_w, bias=None, stride=layer.stride, padding=layer.padding)
    second = PointwiseWeights(second_w, bias=layer.bias)
    return ChannelPair(first, second, c_prime, truncation_error(res.sigma, c_prime))


def spatial_decompose(layer: ConvWeights, c_prime: int) -> SpatialPair:
    """Split a conv layer into horizontal (c', k_w, 1, c) filters
    followed by vertical (n, 1, k_h, c') filters, via truncated SVD of
    the width/height matricization."""
    t = check_finite(layer.weights, "conv weights")
    n, kw, kh, c = t.shape
    bound = max_rank("spatial", n, kw, kh, c)
    if not 1 <= c_prime <= bound:
        raise ValidationError(f"filter count {c_prime} out of range [1, {bound}]")

    # A[x*c + i, y*n + j] = T[j, x, y, i]
    a = matricize(t, (1, 3), (2, 0))
    res = svd(a)
    ur, sr, vr = svd_truncate(res, c_prime)

    # Horizontal filter f: h[f, x, 0, i] = U[x*c + i, f]
    h = ur.T.reshape(c_prime, kw, c, 1).transpose(0, 1, 3, 2).astype(np.float32)
    # Vertical filter: v[j, 0, y, f] = (Sr Vr)[f, y*n + j]
    sv = sr[:, None] * vr
    v = sv.reshape(c_prime, kh, n).transpose(2, 0, 1)[:, None, :, :].transpose(
        0, 1, 3, 2
    )
    # After the transposes v has shape (n, 1, k_h, c')
    v = np.ascontiguousarray(v).astype(np.float32)
    # Stride/padding split axis-wise: the horizontal factor handles the
    # width components, the vertical factor the height components. A
    # zero row stays zero through the k_h=1 horizontal filter, so this
    # composes to exactly the original layer's padding semantics.
    sw, sh = layer.stride
    pw, ph = layer.padding
    horizontal = ConvWeights(h, bias=None, stride=(sw, 1), padding=(pw, 0))
    vertical = ConvWeights(v, bias=layer.bias, stride=(1, sh), padding=(0, ph))
    return SpatialPair(horizontal, vertical, c_prime, truncation_error(res.sigma, c_prime))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def match_rank(shape: tuple[int, int, int, int], r: int, target: str) -> int:
    """Filter count c' that gives a baseline scheme the same MAC budget
    as the depthwise+pointwise pair at rank r.

    channel: c' = round(r * c * (n + k_h*k_w) / (c*k_h*k_w + n))
    spatial: c' = round(r * c * (n + k_h*k_w) / (c*k_w + n*k_h))

    Half-up rounding, clamped to [1, scheme max].
    """
    n, kw, kh, c = shape
    if r < 1:
        raise ValidationError(f"rank must be >= 1, got {r}")
    if target == "channel":
        raw = r * c * (n + kh * kw) / (c * kh * kw + n)
    elif target == "spatial":
        raw = r * c * (n + kh * kw) / (c * kw + n * kh)
    else:
        raise ValidationError(f"unknown rank-match target {target!r}")
    bound = max_rank(target, n, kw, kh, c)
    return max(1, min(bound, _round_half_up(raw)))
