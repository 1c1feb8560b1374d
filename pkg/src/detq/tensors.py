"""Float tensor containers, reference convolution, and comparison utilities.

The canonical layout everywhere in this package is channel-major, row-major:
activations are (channels, height, width), convolution weights are
(in_channels, K, K, out_channels).  Only stride-1, zero same-padded
convolutions are supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FloatTensor",
    "ConvLayerF",
    "DiffReport",
    "ShapeError",
    "conv2d_float",
    "compare_tensors",
    "causal_mask",
]


class ShapeError(ValueError):
    """Raised when tensor / layer geometries do not line up."""


@dataclass(frozen=True, eq=False)
class FloatTensor:
    """Real-valued activation tensor, shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"expected (c, h, w) tensor, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self):
        return self.data.shape


def causal_mask(k: int) -> np.ndarray:
    """(k, k) 0/1 mask keeping strictly-prior raster positions.

    The kernel center and every position at or after it in raster order is
    zeroed, so a masked convolution at position t never sees position t or
    any later one.
    """
    if k % 2 != 1:
        raise ValueError("kernel size must be odd")
    m = np.zeros((k, k), dtype=np.float64)
    c = k // 2
    m[:c, :] = 1.0
    m[c, :c] = 1.0
    return m


@dataclass(frozen=True, eq=False)
class ConvLayerF:
    """Float convolution layer: weights (m, K, K, n), bias (n,), stride 1.

    ``mask=True`` zeroes the kernel center and all raster-later taps
    (autoregressive context convolution).
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    mask: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 4 or w.shape[1] != w.shape[2]:
            raise ShapeError(f"weights must be (m, K, K, n), got {w.shape}")
        if w.shape[1] % 2 != 1:
            raise ShapeError(f"kernel size must be odd, got {w.shape[1]}")
        if b.shape != (w.shape[3],):
            raise ShapeError(f"bias must have length {w.shape[3]}, got {b.shape}")
        if self.stride != 1:
            raise ShapeError("only stride 1 is supported")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters contain non-finite values")
        if self.mask:
            w = w * causal_mask(w.shape[1])[None, :, :, None]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[3]


def im2col(data: np.ndarray, k: int) -> np.ndarray:
    """Zero-padded sliding windows of (c, h, w) data as (h*w, c*k*k).

    Column order matches (m, K, K, n) weights flattened over (m, K, K).
    """
    c, h, w = data.shape
    pad = k // 2
    xp = np.pad(data, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    # win: (c, h, w, k, k) -> (h, w, c, k, k) -> (h*w, c*k*k)
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * k * k)


def conv2d_float(inp: FloatTensor, layer: ConvLayerF) -> FloatTensor:
    """Reference cross-correlation plus bias, zero same-padding, stride 1."""
    c, h, w = inp.shape
    if c != layer.in_channels:
        raise ShapeError(
            f"input has {c} channels, layer expects {layer.in_channels}"
        )
    cols = im2col(inp.data, layer.kernel)
    wmat = layer.weights.reshape(-1, layer.out_channels)
    out = cols @ wmat + layer.bias
    return FloatTensor(out.reshape(h, w, layer.out_channels).transpose(2, 0, 1))


@dataclass(frozen=True, eq=False)
class DiffReport:
    max_abs: float
    max_rel: float
    argmax_index: tuple

    def __str__(self):
        return (
            f"max_abs={self.max_abs:.6g} max_rel={self.max_rel:.6g} "
            f"at {self.argmax_index}"
        )


def compare_tensors(a: FloatTensor, b: FloatTensor, tol: float = 0.0) -> DiffReport:
    """Elementwise max absolute / relative difference with its location.

    Relative difference uses max(|a|, |b|) as denominator and is 0 where
    both values are 0.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a.data - b.data)
    denom = np.maximum(np.abs(a.data), np.abs(b.data))
    rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
    idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return DiffReport(
        max_abs=float(diff.max()),
        max_rel=float(rel.max()),
        argmax_index=tuple(int(i) for i in idx),
    )
