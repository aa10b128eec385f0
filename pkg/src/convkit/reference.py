"""Reference forward pass with multiply-accumulate accounting.

Feature maps are float32 arrays in axis order (W, H, channels).
Convolutions use cross-correlation semantics (no kernel flip), zero
padding, and floor-based output extents. Dot products accumulate in
float64 before the result is cast back to float32.

MACs are the counted unit (one multiply + one add); relu and pooling
count zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decompose import ConvWeights, DepthwiseWeights, PointwiseWeights
from .errors import ValidationError


@dataclass
class MacCounter:
    """Accumulates multiply-accumulate counts, per layer and in total."""

    total: int = 0
    breakdown: list[tuple[str, int]] = field(default_factory=list)

    def add(self, name: str, count: int) -> None:
        self.breakdown.append((name, int(count)))
        self.total += int(count)

    def merge(self, other: "MacCounter") -> None:
        for name, count in other.breakdown:
            self.add(name, count)


def conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ValidationError(
            f"kernel {kernel} larger than padded input extent {size + 2 * pad}"
        )
    return out


def _pad2d(x: np.ndarray, pw: int, ph: int) -> np.ndarray:
    if pw == 0 and ph == 0:
        return x
    return np.pad(x, ((pw, pw), (ph, ph), (0, 0)))


def conv2d(
    x: np.ndarray,
    layer: ConvWeights,
    counter: MacCounter | None = None,
    name: str = "conv2d",
) -> np.ndarray:
    """Standard convolution of a (W, H, c) map with (n, k_w, k_h, c) weights."""
    w, h, cin = x.shape
    n, kw, kh, c = layer.weights.shape
    if cin != c:
        raise ValidationError(f"{name}: input has {cin} channels, weights expect {c}")
    sw, sh = layer.stride
    pw, ph = layer.padding
    ow = conv_output_extent(w, kw, sw, pw)
    oh = conv_output_extent(h, kh, sh, ph)

    xp = _pad2d(x, pw, ph).astype(np.float64)
    wk = layer.weights.astype(np.float64)
    acc = np.zeros((ow * oh, n))
    for dx in range(kw):
        for dy in range(kh):
            window = xp[dx : dx + ow * sw : sw, dy : dy + oh * sh : sh, :]
            acc += window.reshape(ow * oh, c) @ wk[:, dx, dy, :].T
    out = acc.reshape(ow, oh, n)
    if layer.bias is not None:
        out = out + layer.bias.astype(np.float64)
    if counter is not None:
        counter.add(name, ow * oh * c * kw * kh * n)
    return out.astype(np.float32)


def depthwise_conv(
    x: np.ndarray,
    layer: DepthwiseWeights,
    counter: MacCounter | None = None,
    name: str = "depthwise",
) -> np.ndarray:
    """Depthwise convolution with channel multiplier r: output channel
    i*r + t is input channel i convolved with kernel i*r + t."""
    w, h, cin = x.shape
    if cin != layer.channels:
        raise ValidationError(
            f"{name}: input has {cin} channels, depthwise expects {layer.channels}"
        )
    rc, kw, kh, _ = layer.weights.shape
    r = layer.multiplier
    sw, sh = layer.stride
    pw, ph = layer.padding
    ow = conv_output_extent(w, kw, sw, pw)
    oh = conv_output_extent(h, kh, sh, ph)

    xp = _pad2d(x, pw, ph).astype(np.float64)
    xr = np.repeat(xp, r, axis=2)  # channel j maps to input channel j // r
    wk = layer.weights[:, :, :, 0].astype(np.float64)
    acc = np.zeros((ow, oh, rc))
    for dx in range(kw):
        for dy in range(kh):
            window = xr[dx : dx + ow * sw : sw, dy : dy + oh * sh : sh, :]
            acc += window * wk[:, dx, dy]
    if counter is not None:
        counter.add(name, ow * oh * kw * kh * rc)
    return acc.astype(np.float32)


def pointwise_conv(
    x: np.ndarray,
    layer: PointwiseWeights,
    counter: MacCounter | None = None,
    name: str = "pointwise",
) -> np.ndarray:
    """Per-pixel channel mix: (W, H, rC) -> (W, H, n)."""
    w, h, cin = x.shape
    n, _, _, rc = layer.weights.shape
    if cin != rc:
        raise ValidationError(f"{name}: input has {cin} channels, pointwise expects {rc}")
    wk = layer.weights[:, 0, 0, :].astype(np.float64)
    out = x.astype(np.float64).reshape(w * h, rc) @ wk.T
    out = out.reshape(w, h, n)
    if layer.bias is not None:
        out = out + layer.bias.astype(np.float64)
    if counter is not None:
        counter.add(name, w * h * rc * n)
    return out.astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 stride-2 max pooling; trailing odd rows/columns are dropped."""
    w, h, c = x.shape
    ow, oh = w // 2, h // 2
    if ow < 1 or oh < 1:
        raise ValidationError(f"map {x.shape} too small for 2x2 pooling")
    v = x[: ow * 2, : oh * 2, :].reshape(ow, 2, oh, 2, c)
    return v.max(axis=(1, 3))


def flatten_map(x: np.ndarray) -> np.ndarray:
    """Row-major flatten of a (W, H, C) map to a vector."""
    return np.ascontiguousarray(x).reshape(-1)


def dense(
    x: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray | None = None,
    counter: MacCounter | None = None,
    name: str = "dense",
) -> np.ndarray:
    """Affine map on a flat vector; weights are (in, out)."""
    if x.ndim != 1:
        raise ValidationError(f"{name}: dense expects a flat vector, got shape {x.shape}")
    if weights.shape[0] != x.shape[0]:
        raise ValidationError(
            f"{name}: vector length {x.shape[0]} != weight rows {weights.shape[0]}"
        )
    out = x.astype(np.float64) @ weights.astype(np.float64)
    if bias is not None:
        out = out + bias.astype(np.float64)
    if counter is not None:
        counter.add(name, weights.shape[0] * weights.shape[1])
    return out.astype(np.float32)
