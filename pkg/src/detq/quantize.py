"""Quantization parameter derivation and layer quantization.

Weights and activations are 16-bit signed integers with power-of-two
scales.  Activation scale is 2^-p per layer; weight scale is 2^-k_j per
output channel, with k_j chosen from the accumulator budget so that a
32-bit accumulator can never overflow for any in-range input.

Rounding is half-away-from-zero everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .tensors import ConvLayerF

__all__ = [
    "K_MAX",
    "INT16_MAX",
    "ACCUM_BITS",
    "REFERENCE_DEFAULTS",
    "LayerQuantSpec",
    "QConvLayer",
    "WeightRangeError",
    "round_half_away",
    "ceil_log2",
    "quantize_value",
    "quantize_activation_tensor",
    "derive_weight_shift",
    "adjust_shift_for_bias",
    "quantize_layer",
]

# Cap on per-channel weight shifts: 2^14 keeps any |W| <= 2 representable
# in int16 after scaling.
K_MAX = 14
INT16_MAX = (1 << 15) - 1
ACCUM_BITS = 32

# Per-subnetwork activation parameters of the reference 16-bit codec:
# (p, N_I) for context / hyperdecoder / gather layers.
REFERENCE_DEFAULTS = {
    "context": {"p": 8, "n_i": 9},
    "hyperdecoder": {"p": 8, "n_i": 16},
    "gather_1_2": {"p": 8, "n_i": 16},
    "gather_3_7": {"p": 10, "n_i": 16},
}


class WeightRangeError(ValueError):
    """A quantized weight or bias does not fit its integer register."""


def round_half_away(x):
    """Round to nearest integer, ties away from zero.  Works on arrays."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def ceil_log2(x) -> int:
    """Exact ceil(log2(x)) for a positive real given as float or Fraction."""
    f = Fraction(x)
    if f <= 0:
        raise ValueError("ceil_log2 requires a positive argument")
    # smallest e with 2^e >= f; start from the bit-length estimate
    e = f.numerator.bit_length() - f.denominator.bit_length()
    while Fraction(2) ** e < f:
        e += 1
    while Fraction(2) ** (e - 1) >= f:
        e -= 1
    return e


def quantize_value(x: float, p: int, b: int) -> int:
    """clamp(round(x * 2^p), -(2^(b-1)-1), 2^(b-1)-1), half away from zero."""
    if b < 2:
        raise ValueError("bit depth must be at least 2")
    lim = (1 << (b - 1)) - 1
    q = int(round_half_away(float(x) * math.ldexp(1.0, p)))
    return max(-lim, min(lim, q))


@dataclass(frozen=True, eq=False)
class LayerQuantSpec:
    """Per-layer quantization parameters.

    n_i: input bit depth; p_in / p_out: activation shift exponents for this
    layer's input and the next layer's input; n_a: accumulator width;
    k: per-output-channel weight shift exponents.
    """

    n_i: int
    p_in: int
    p_out: int
    k: np.ndarray
    n_a: int = ACCUM_BITS

    def __post_init__(self):
        if not 2 <= self.n_i <= 16:
            raise ValueError(f"n_i out of range: {self.n_i}")
        if self.n_a != ACCUM_BITS:
            raise ValueError("only 32-bit accumulators are supported")
        if not (0 <= self.p_in <= 15 and 0 <= self.p_out <= 15):
            raise ValueError("p must be in [0, 15]")
        k = np.asarray(self.k, dtype=np.int64)
        if np.any(k < 0):
            raise ValueError("negative channel shift")
        object.__setattr__(self, "k", k)


@dataclass(frozen=True, eq=False)
class QConvLayer:
    """Quantized convolution layer: int16-valued weights, wide-int bias."""

    w_q: np.ndarray  # (m, K, K, n) int64, entries within int16
    b_q: np.ndarray  # (n,) int64
    spec: LayerQuantSpec
    mask: bool = False

    def __post_init__(self):
        w = np.asarray(self.w_q, dtype=np.int64)
        b = np.asarray(self.b_q, dtype=np.int64)
        if np.abs(w).max(initial=0) > INT16_MAX:
            raise WeightRangeError("quantized weights exceed int16 range")
        if np.abs(b).max(initial=0) > (1 << (self.spec.n_a - 1)) - 1:
            raise WeightRangeError("quantized bias exceeds accumulator range")
        object.__setattr__(self, "w_q", w)
        object.__setattr__(self, "b_q", b)

    @property
    def in_channels(self) -> int:
        return self.w_q.shape[0]

    @property
    def kernel(self) -> int:
        return self.w_q.shape[1]

    @property
    def out_channels(self) -> int:
        return self.w_q.shape[3]


def derive_weight_shift(w_col, n_a: int = ACCUM_BITS, n_i: int = 16) -> int:
    """Maximum per-channel weight shift allowed by the accumulator budget.

    k_j = n_a - n_i - ceil(log2(sum |W|)), floored at 0.  An all-zero
    channel gets K_MAX (any shift works; the weights stay zero).
    """
    if n_a <= n_i:
        raise ValueError("accumulator must be wider than the input")
    vals = [abs(float(v)) for v in np.asarray(w_col).ravel()]
    s = math.fsum(vals)
    if s == 0.0:
        return K_MAX
    # fsum is correctly rounded, so its ceil(log2) can only be wrong when it
    # lands exactly on a power of two; settle that case with exact rationals
    if math.frexp(s)[0] == 0.5:
        s = sum(map(Fraction, vals))
    return max(n_a - n_i - ceil_log2(s), 0)


def adjust_shift_for_bias(k_j: int, b_j: float, p: int, n_a: int = ACCUM_BITS) -> int:
    """Reduce a channel shift so the bias also fits the accumulator budget.

    Applied only for non-zero bias: k' = min(n_a-1-p-max(ceil(log2|b|),0), k) - 1.
    """
    if b_j == 0:
        return k_j
    lb = max(ceil_log2(abs(float(b_j))), 0)
    return min(n_a - 1 - p - lb, k_j) - 1


def _quantize_channel(w_col: np.ndarray, k: int):
    return round_half_away(w_col * math.ldexp(1.0, k)).astype(np.int64)


def quantize_layer(
    layer: ConvLayerF,
    n_i: int,
    p_in: int,
    p_out: int,
    n_a: int = ACCUM_BITS,
    name: str = "layer",
) -> QConvLayer:
    """Quantize one convolution layer with per-channel weight shifts.

    Weights and bias are scaled and rounded without clipping.  If a channel's
    scaled weights do not fit int16, the shift is capped at K_MAX; if they
    still do not fit, the layer is rejected.  As a final safety net the
    shift is lowered until the worst-case accumulator value (sign-matched
    extreme input plus bias) provably fits n_a bits.
    """
    m, kk, _, n = layer.weights.shape
    x_max = (1 << (n_i - 1)) - 1
    acc_max = (1 << (n_a - 1)) - 1
    eq14_budget = 1 << (n_a - n_i)

    w_q = np.zeros((m, kk, kk, n), dtype=np.int64)
    b_q = np.zeros(n, dtype=np.int64)
    ks = np.zeros(n, dtype=np.int64)

    for j in range(n):
        col = layer.weights[:, :, :, j]
        bias = float(layer.bias[j])
        k = derive_weight_shift(col, n_a, n_i)
        if bias != 0.0:
            k = adjust_shift_for_bias(k, bias, p_in, n_a)
            k = max(k, 0)
        wq = _quantize_channel(col, k)
        if np.abs(wq).max(initial=0) > INT16_MAX:
            if k > K_MAX:
                k = K_MAX
                wq = _quantize_channel(col, k)
            if np.abs(wq).max(initial=0) > INT16_MAX:
                raise WeightRangeError(
                    f"{name}: channel {j}: weight magnitude "
                    f"{np.abs(col).max():.6g} not representable in int16 "
                    f"at shift {k}"
                )
        bq = int(round_half_away(bias * math.ldexp(1.0, k + p_in)))
        # Rounding can push the channel a hair past the static budget;
        # lower the shift until the worst-case accumulator provably fits.
        while k > 0 and (
            int(np.abs(wq).sum()) > eq14_budget
            or int(np.abs(wq).sum()) * x_max + abs(bq) > acc_max
        ):
            k -= 1
            wq = _quantize_channel(col, k)
            bq = int(round_half_away(bias * math.ldexp(1.0, k + p_in)))
        if int(np.abs(wq).sum()) * x_max + abs(bq) > acc_max:
            raise WeightRangeError(
                f"{name}: channel {j}: cannot satisfy accumulator bound"
            )
        w_q[:, :, :, j] = wq
        b_q[j] = bq
        ks[j] = k

    spec = LayerQuantSpec(n_i=n_i, p_in=p_in, p_out=p_out, k=ks, n_a=n_a)
    return QConvLayer(w_q=w_q, b_q=b_q, spec=spec, mask=layer.mask)


def quantize_activation_tensor(x, spec: LayerQuantSpec) -> "QTensor":
    """Elementwise activation quantization at the layer's input grid."""
    from .intops import QTensor

    data = np.asarray(x.data if hasattr(x, "data") else x, dtype=np.float64)
    lim = (1 << (spec.n_i - 1)) - 1
    q = round_half_away(data * math.ldexp(1.0, spec.p_in))
    q = np.clip(q, -lim, lim).astype(np.int64)
    return QTensor(data=q, scale_exp=spec.p_in, bit_depth=spec.n_i)
