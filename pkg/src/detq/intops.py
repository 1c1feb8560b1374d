"""Fused integer convolution pipeline for the entropy subnetworks.

All arithmetic after activation quantization is exact integer arithmetic:
int16-range operands, 32-bit accumulators whose overflow is excluded
statically by the shift derivation, and per-channel fused rescaling via
arithmetic shifts with half-away-from-zero rounding.  Because every
accumulation is exact, the result is bit-identical for any summation
order; the `order` argument exists to demonstrate that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gmm import GmmParams
from .quantize import QConvLayer
from .tensors import ShapeError, im2col

__all__ = [
    "QTensor",
    "EntropyStack",
    "AccumulatorOverflowError",
    "ORDERS",
    "LEAKY_NUM",
    "LEAKY_SHIFT",
    "clamp_input",
    "round_shift",
    "qconv_forward",
    "masked_conv_forward",
    "requantize",
    "leaky_relu_int",
    "linear_softmax_int",
    "linear_softmax_field",
    "run_entropy_stack",
]

ORDERS = ("seq", "rev", "tree")

# LeakyReLU negative slope 41/4096 ~= 0.01 as a dyadic rational.
LEAKY_NUM = 41
LEAKY_SHIFT = 12


class AccumulatorOverflowError(ArithmeticError):
    """An accumulator partial or final value left the 32-bit range.

    This signals a quantizer bug: the shift derivation is supposed to make
    overflow impossible.
    """


@dataclass(frozen=True, eq=False)
class QTensor:
    """Integer tensor (c, h, w) with value ~= data * 2^-scale_exp."""

    data: np.ndarray
    scale_exp: int
    bit_depth: int = 16

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.int64)
        if arr.ndim != 3:
            raise ShapeError(f"expected (c, h, w) tensor, got shape {arr.shape}")
        lim = (1 << (self.bit_depth - 1)) - 1
        if arr.size and np.abs(arr).max() > lim:
            raise ValueError(
                f"entry exceeds {self.bit_depth}-bit range (+-{lim})"
            )
        object.__setattr__(self, "data", arr)

    @property
    def shape(self):
        return self.data.shape


def clamp_input(x: QTensor, n_i: int) -> QTensor:
    """Clamp entries to +-(2^(n_i-1)-1); scale is unchanged."""
    lim = (1 << (n_i - 1)) - 1
    return QTensor(
        data=np.clip(x.data, -lim, lim), scale_exp=x.scale_exp, bit_depth=n_i
    )


def round_shift(v, s: int):
    """Scale by 2^-s with half-away rounding (s > 0) or left shift (s <= 0).

    Left shifts that could push values past 31 bits raise, since a real
    32-bit register would wrap.
    """
    v = np.asarray(v, dtype=np.int64)
    if s > 0:
        r = (np.abs(v) + (1 << (s - 1))) >> s
        return np.where(v < 0, -r, r)
    if s == 0:
        return v.copy()
    out = v << (-s)
    if out.size and int(np.abs(out).max()) > (1 << 31) - 1:
        raise AccumulatorOverflowError(
            f"left shift by {-s} exceeds the 32-bit range"
        )
    return out


def _ordered_sum(products: np.ndarray, order: str) -> np.ndarray:
    """Reduce (P, T, n) products over T in the requested order."""
    if order == "seq":
        return np.cumsum(products, axis=1)[:, -1, :]
    if order == "rev":
        return np.cumsum(products[:, ::-1, :], axis=1)[:, -1, :]
    if order == "tree":
        arr = products
        while arr.shape[1] > 1:
            t = arr.shape[1]
            even = arr[:, 0 : t - t % 2 : 2, :] + arr[:, 1:t:2, :]
            if t % 2:
                even = np.concatenate([even, arr[:, t - 1 : t, :]], axis=1)
            arr = even
        return arr[:, 0, :]
    raise ValueError(f"unknown accumulation order {order!r}")


def qconv_forward(
    x: QTensor,
    layer: QConvLayer,
    order: str = "seq",
    check_overflow: bool = True,
) -> np.ndarray:
    """Exact integer cross-correlation plus bias; returns (n, h, w) int64.

    With check_overflow, the sum of absolute products plus |bias| is
    verified against the 32-bit limit; this bounds every partial sum in
    every summation order, so a violation means the static guarantee was
    broken.
    """
    c, h, w = x.shape
    if c != layer.in_channels:
        raise ShapeError(
            f"input has {c} channels, layer expects {layer.in_channels}"
        )
    lim = (1 << (layer.spec.n_i - 1)) - 1
    if x.data.size and np.abs(x.data).max() > lim:
        raise ValueError("input not clamped to the layer's bit depth")
    cols = im2col(x.data, layer.kernel)  # (h*w, m*K*K)
    wmat = layer.w_q.reshape(-1, layer.out_channels)
    products = cols[:, :, None] * wmat[None, :, :]
    if check_overflow:
        worst = np.abs(products).sum(axis=1) + np.abs(layer.b_q)[None, :]
        if worst.size and int(worst.max()) > (1 << 31) - 1:
            raise AccumulatorOverflowError(
                "accumulator bound violated: worst-case partial sum "
                f"{int(worst.max())} exceeds 2^31-1"
            )
    acc = _ordered_sum(products, order) + layer.b_q[None, :]
    return acc.reshape(h, w, layer.out_channels).transpose(2, 0, 1)


def masked_conv_forward(
    x: QTensor,
    layer: QConvLayer,
    order: str = "seq",
    check_overflow: bool = True,
) -> np.ndarray:
    """Causal context convolution; the layer must carry the mask flag.

    The causal zeroes live in the quantized weights, so this is the plain
    integer convolution plus a flag check.
    """
    if not layer.mask:
        raise ValueError("masked_conv_forward requires a masked layer")
    return qconv_forward(x, layer, order=order, check_overflow=check_overflow)


def requantize(
    acc: np.ndarray,
    layer: QConvLayer,
    p_next: int,
    out_bits: int = 16,
) -> QTensor:
    """Fused rescale of an accumulator to the next layer's input grid.

    acc represents real values at scale 2^-(k_j + p_in) per channel j; the
    output is at 2^-p_next, so each channel shifts by k_j + p_in - p_next.
    """
    acc = np.asarray(acc, dtype=np.int64)
    out = np.empty_like(acc)
    for j in range(acc.shape[0]):
        s = int(layer.spec.k[j]) + layer.spec.p_in - p_next
        out[j] = round_shift(acc[j], s)
    lim = (1 << (out_bits - 1)) - 1
    return QTensor(
        data=np.clip(out, -lim, lim), scale_exp=p_next, bit_depth=out_bits
    )


def leaky_relu_int(x: QTensor) -> QTensor:
    """Integer LeakyReLU with negative slope 41/4096."""
    neg = round_shift(x.data * LEAKY_NUM, LEAKY_SHIFT)
    return QTensor(
        data=np.where(x.data >= 0, x.data, neg),
        scale_exp=x.scale_exp,
        bit_depth=x.bit_depth,
    )


def linear_softmax_field(z: np.ndarray, scale_exp: int) -> np.ndarray:
    """Linearized Softmax over axis 0 of a (3, ...) integer array.

    exp(z) is replaced by its first-order approximation 1 + z in fixed
    point, floored at one unit to stay positive.  Every component gets a
    floor weight of 1; the remaining 2^15 - 3 units are apportioned by
    largest remainder (ties to the lowest component), so the outputs are
    strictly positive and sum to exactly 2^15.
    """
    z = np.asarray(z, dtype=np.int64)
    if z.shape[0] != 3:
        raise ShapeError("expected 3 mixture components on axis 0")
    target = (1 << 15) - 3
    n = np.maximum((1 << scale_exp) + z, 1)
    denom = n.sum(axis=0)
    base = n * target // denom
    rem = n * target % denom
    left = target - base.sum(axis=0)
    # stable argsort on -rem ranks equal remainders by component index
    order = np.argsort(-rem, axis=0, kind="stable")
    rank = np.empty_like(order)
    comp_idx = np.arange(3).reshape((3,) + (1,) * (z.ndim - 1))
    np.put_along_axis(rank, order, np.broadcast_to(comp_idx, z.shape).copy(), axis=0)
    return 1 + base + (rank < left)


def linear_softmax_int(z, scale_exp: int):
    """Length-3 convenience wrapper around linear_softmax_field."""
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (3,):
        raise ShapeError("expected exactly 3 mixture logits")
    return linear_softmax_field(z, scale_exp)


@dataclass(frozen=True, eq=False)
class EntropyStack:
    """Quantized entropy subnetworks: hyperdecoder, context, gather.

    The last gather layer is the GMM head: 9 output channels per latent
    channel, ordered [w1 w2 w3 | mu1 mu2 mu3 | sigma1 sigma2 sigma3].
    """

    hyperdecoder: tuple
    context: tuple
    gather: tuple
    latent_channels: int

    def __post_init__(self):
        object.__setattr__(self, "hyperdecoder", tuple(self.hyperdecoder))
        object.__setattr__(self, "context", tuple(self.context))
        object.__setattr__(self, "gather", tuple(self.gather))
        if len(self.gather) != 7:
            raise ShapeError("gather subnetwork must have exactly 7 layers")
        for name, chain in (
            ("hyperdecoder", self.hyperdecoder),
            ("context", self.context),
            ("gather", self.gather),
        ):
            for a, b in zip(chain, chain[1:]):
                if a.out_channels != b.in_channels:
                    raise ShapeError(f"{name}: channel mismatch between layers")
                if a.spec.p_out != b.spec.p_in:
                    raise ShapeError(f"{name}: p_out/p_in chain broken")
        for lyr in self.context:
            if not lyr.mask:
                raise ShapeError("context layers must be masked")
        fused = (self.hyperdecoder[-1].out_channels if self.hyperdecoder else 0) + (
            self.context[-1].out_channels if self.context else 0
        )
        if fused != self.gather[0].in_channels:
            raise ShapeError(
                "gather input channels must equal hyperdecoder + context outputs"
            )
        if self.hyperdecoder and self.hyperdecoder[-1].spec.p_out != self.gather[0].spec.p_in:
            raise ShapeError("hyperdecoder p_out must match gather p_in")
        if self.context and self.context[-1].spec.p_out != self.gather[0].spec.p_in:
            raise ShapeError("context p_out must match gather p_in")
        if self.context and any(l.kernel != 1 for l in self.gather):
            # autoregressive decoding evaluates gather pointwise
            raise ShapeError(
                "gather layers must be 1x1 when a context model is present"
            )
        if self.gather[-1].out_channels != 9 * self.latent_channels:
            raise ShapeError("head must emit 9 channels per latent channel")

    @property
    def head(self) -> QConvLayer:
        return self.gather[-1]

    @property
    def head_scale_exp(self) -> int:
        return self.gather[-1].spec.p_out

    @property
    def sigma_min(self) -> int:
        return max(1, 1 << max(self.head_scale_exp - 4, 0))


def _layer_step(x, layer, next_bits, order, check_overflow, activation=True):
    xc = clamp_input(x, layer.spec.n_i)
    if layer.mask:
        acc = masked_conv_forward(xc, layer, order, check_overflow)
    else:
        acc = qconv_forward(xc, layer, order, check_overflow)
    q = requantize(acc, layer, p_next=layer.spec.p_out, out_bits=next_bits)
    return leaky_relu_int(q) if activation else q


def _run_chain(x, chain, order, check_overflow):
    for i, layer in enumerate(chain):
        next_bits = chain[i + 1].spec.n_i if i + 1 < len(chain) else 16
        x = _layer_step(x, layer, next_bits, order, check_overflow)
    return x


def run_entropy_stack(
    latent_context: QTensor,
    hyper_latent: QTensor,
    stack: EntropyStack,
    order: str = "seq",
    check_overflow: bool = True,
) -> GmmParams:
    """Full integer entropy inference: hyperdecoder + context -> gather -> GMM.

    Inputs must already be quantized at the first layers' input grids.
    The output is a pure function of the inputs and the stack bits.
    """
    feats = []
    if stack.hyperdecoder:
        feats.append(_run_chain(hyper_latent, stack.hyperdecoder, order, check_overflow))
    if stack.context:
        feats.append(_run_chain(latent_context, stack.context, order, check_overflow))
    if len(feats) == 2 and feats[0].scale_exp != feats[1].scale_exp:
        raise ShapeError("fused features disagree on scale")
    fused = QTensor(
        data=np.concatenate([f.data for f in feats], axis=0),
        scale_exp=feats[0].scale_exp,
        bit_depth=16,
    )
    x = fused
    for i, layer in enumerate(stack.gather[:-1]):
        nxt = stack.gather[i + 1].spec.n_i
        x = _layer_step(x, layer, nxt, order, check_overflow)
    head_out = _layer_step(
        x, stack.head, 16, order, check_overflow, activation=False
    )
    p_e = stack.head_scale_exp
    c = stack.latent_channels
    y = head_out.data.reshape(c, 9, *head_out.data.shape[1:])
    z = y[:, 0:3].transpose(1, 0, 2, 3)
    means = y[:, 3:6].transpose(1, 0, 2, 3)
    scales = y[:, 6:9].transpose(1, 0, 2, 3)
    weights = linear_softmax_field(z, p_e)
    scales = np.maximum(scales, stack.sigma_min)
    return GmmParams(
        weights=weights, means=means, scales=scales, scale_exp=p_e
    )
