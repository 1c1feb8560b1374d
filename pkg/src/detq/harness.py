"""Cross-device interop experiments, calibration, and the failure demo.

Cross-device floating-point variance is modeled by accumulation-order
variants (sequential, reversed, pairwise tree) executed in float32; the
integer pipeline is provably order-invariant, so the same variants leave
its priors bit-identical.  Encode-on-A / decode-on-B experiments then show
that float priors can break entropy decoding while integer priors
round-trip exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gmm import (
    CDF_TOTAL,
    WEIGHT_TOTAL,
    GmmParams,
    build_cdf_table,
    gmm_pmf_field,
    sigma_min_for,
)
from .intops import (
    LEAKY_NUM,
    LEAKY_SHIFT,
    ORDERS,
    EntropyStack,
    QTensor,
    _ordered_sum,
    _run_chain,
    run_entropy_stack,
)
from .quantize import quantize_layer, round_half_away
from .rc import rc_decode, rc_encode
from .tensors import ConvLayerF, im2col

__all__ = [
    "BackendVariant",
    "InteropReport",
    "CalibrationReport",
    "LayerCfg",
    "EntropyStackF",
    "FloatPriors",
    "conv_ordered_float",
    "run_float_stack",
    "discretize_priors",
    "run_backend",
    "field_tables",
    "roundtrip_experiment",
    "boundary_failure_demo",
    "calibrate_shifts",
    "float_cross_entropy_bits",
    "int_cross_entropy_bits",
    "random_stack",
    "random_latent",
    "DEFAULT_SYMBOL_BOUND",
]

DEFAULT_SYMBOL_BOUND = 8

_LEAKY_SLOPE = np.float32(LEAKY_NUM) / np.float32(1 << LEAKY_SHIFT)


@dataclass(frozen=True)
class BackendVariant:
    """One simulated device: an accumulation order and an arithmetic mode."""

    id: str
    order: str = "seq"
    mode: str = "int"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"unknown order {self.order!r}")
        if self.mode not in ("int", "float"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class InteropReport:
    decoded_equal: bool
    first_mismatch: int | None
    prior_max_reldiff: float

    def to_text(self) -> str:
        mismatch = "none" if self.first_mismatch is None else str(self.first_mismatch)
        return (
            f"decoded_equal={'true' if self.decoded_equal else 'false'}\n"
            f"first_mismatch={mismatch}\n"
            f"prior_max_reldiff={self.prior_max_reldiff:.9e}\n"
        )


@dataclass
class LayerCfg:
    """Activation quantization parameters attached to one float layer."""

    n_i: int
    p_in: int
    p_out: int


@dataclass
class EntropyStackF:
    """Float entropy stack plus per-layer quantization configuration."""

    hyperdecoder: list
    context: list
    gather: list
    hyper_cfg: list
    context_cfg: list
    gather_cfg: list
    latent_channels: int

    def chains(self):
        return (
            ("hyperdecoder", self.hyperdecoder, self.hyper_cfg),
            ("context", self.context, self.context_cfg),
            ("gather", self.gather, self.gather_cfg),
        )

    @property
    def head_scale_exp(self) -> int:
        return self.gather_cfg[-1].p_out

    def junctions(self):
        """Calibratable p variables in topological order.

        Each junction is (chain_name, layer_index); setting it fixes that
        layer's p_in and every tied upstream p_out.
        """
        out = []
        for name, layers, _ in self.chains():
            out.extend((name, i) for i in range(len(layers)))
        return out

    def _cfg(self, name):
        return {
            "hyperdecoder": self.hyper_cfg,
            "context": self.context_cfg,
            "gather": self.gather_cfg,
        }[name]

    def junction_p(self, junction) -> int:
        name, i = junction
        return self._cfg(name)[i].p_in

    def set_junction_p(self, junction, p: int):
        name, i = junction
        cfg = self._cfg(name)
        cfg[i].p_in = p
        if i > 0:
            cfg[i - 1].p_out = p
        elif name == "gather":
            if self.hyper_cfg:
                self.hyper_cfg[-1].p_out = p
            if self.context_cfg:
                self.context_cfg[-1].p_out = p

    def quantize(self) -> EntropyStack:
        def quant_chain(name, layers, cfgs):
            return [
                quantize_layer(
                    lyr,
                    n_i=c.n_i,
                    p_in=c.p_in,
                    p_out=c.p_out,
                    name=f"{name}[{i}]",
                )
                for i, (lyr, c) in enumerate(zip(layers, cfgs))
            ]

        return EntropyStack(
            hyperdecoder=quant_chain("hyperdecoder", self.hyperdecoder, self.hyper_cfg),
            context=quant_chain("context", self.context, self.context_cfg),
            gather=quant_chain("gather", self.gather, self.gather_cfg),
            latent_channels=self.latent_channels,
        )


@dataclass(frozen=True)
class FloatPriors:
    """Raw float mixture parameters, component axis first, shape (3, c, h, w)."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def max_reldiff(self, other: "FloatPriors") -> float:
        worst = 0.0
        for a, b in (
            (self.weights, other.weights),
            (self.means, other.means),
            (self.scales, other.scales),
        ):
            a64 = np.asarray(a, dtype=np.float64)
            b64 = np.asarray(b, dtype=np.float64)
            denom = np.maximum(np.maximum(np.abs(a64), np.abs(b64)), 1e-30)
            worst = max(worst, float(np.max(np.abs(a64 - b64) / denom)))
        return worst


def conv_ordered_float(x: np.ndarray, layer: ConvLayerF, order: str) -> np.ndarray:
    """float32 convolution with an explicit accumulation order.

    This is the stand-in for device-dependent float kernels: the result
    depends on the order at the ulp level.
    """
    c, h, w = x.shape
    cols = im2col(np.asarray(x, dtype=np.float32), layer.kernel).astype(np.float32)
    wmat = layer.weights.reshape(-1, layer.out_channels).astype(np.float32)
    products = cols[:, :, None] * wmat[None, :, :]
    acc = _ordered_sum(products, order) + layer.bias.astype(np.float32)
    return acc.reshape(h, w, layer.out_channels).transpose(2, 0, 1)


def _leaky_float(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, x, (x * _LEAKY_SLOPE).astype(np.float32))


def run_float_stack(
    stack: EntropyStackF,
    latent: np.ndarray,
    hyper: np.ndarray,
    order: str = "seq",
) -> FloatPriors:
    """Float32 reference inference of the full entropy stack."""

    def chain(x, layers, last_act=True):
        for i, lyr in enumerate(layers):
            x = conv_ordered_float(x, lyr, order)
            if last_act or i + 1 < len(layers):
                x = _leaky_float(x)
        return x

    feats = []
    if stack.hyperdecoder:
        feats.append(chain(np.asarray(hyper, np.float32), stack.hyperdecoder))
    if stack.context:
        feats.append(chain(np.asarray(latent, np.float32), stack.context))
    x = np.concatenate(feats, axis=0)
    for lyr in stack.gather[:-1]:
        x = _leaky_float(conv_ordered_float(x, lyr, order))
    y = conv_ordered_float(x, stack.gather[-1], order)

    c = stack.latent_channels
    p_e = stack.head_scale_exp
    y = y.reshape(c, 9, *y.shape[1:])
    z = y[:, 0:3].transpose(1, 0, 2, 3)
    means = y[:, 3:6].transpose(1, 0, 2, 3)
    scales = y[:, 6:9].transpose(1, 0, 2, 3)
    unit = np.float32(math.ldexp(1.0, -p_e))
    nums = np.maximum(np.float32(1.0) + z, unit)
    weights = nums / nums.sum(axis=0, keepdims=True)
    sigma_floor = np.float32(sigma_min_for(p_e) * math.ldexp(1.0, -p_e))
    scales = np.maximum(scales, sigma_floor)
    return FloatPriors(weights=weights, means=means, scales=scales)


def _apportion_weights_q15(weights: np.ndarray) -> np.ndarray:
    """Float mixture weights (3, ...) -> positive Q15 integers, total 2^15.

    Mirrors the integer softmax apportionment: floor of 1 per component,
    remainder by largest fractional part.
    """
    target = WEIGHT_TOTAL - 3
    scaled = np.asarray(weights, dtype=np.float64) * target
    base = np.floor(scaled).astype(np.int64)
    rem = scaled - base
    left = target - base.sum(axis=0)
    order = np.argsort(-rem, axis=0, kind="stable")
    rank = np.empty_like(order)
    comp = np.arange(3).reshape((3,) + (1,) * (weights.ndim - 1))
    np.put_along_axis(
        rank, order, np.broadcast_to(comp, weights.shape).copy(), axis=0
    )
    return 1 + base + (rank < left)


def discretize_priors(priors: FloatPriors, scale_exp: int) -> GmmParams:
    """Fixed-point GmmParams from float priors (the "float priors" path).

    This models a device that computes priors in float and must discretize
    them to drive the shared CDF tables; a one-ulp float difference can
    cross a rounding boundary here and change the tables.
    """
    unit = math.ldexp(1.0, scale_exp)
    means = round_half_away(np.asarray(priors.means, np.float64) * unit).astype(np.int64)
    scales = round_half_away(np.asarray(priors.scales, np.float64) * unit).astype(np.int64)
    scales = np.maximum(scales, sigma_min_for(scale_exp))
    weights = _apportion_weights_q15(priors.weights)
    return GmmParams(weights=weights, means=means, scales=scales, scale_exp=scale_exp)


@dataclass(frozen=True)
class StackPair:
    """Float stack and its quantized form, run by either backend mode."""

    float_stack: EntropyStackF
    quant_stack: EntropyStack


def make_stack_pair(fstack: EntropyStackF) -> StackPair:
    return StackPair(float_stack=fstack, quant_stack=fstack.quantize())


def _quantize_input(values: np.ndarray, p: int, n_i: int) -> QTensor:
    lim = (1 << (n_i - 1)) - 1
    q = round_half_away(np.asarray(values, np.float64) * math.ldexp(1.0, p))
    return QTensor(data=np.clip(q, -lim, lim).astype(np.int64), scale_exp=p, bit_depth=n_i)


def _int_priors(stacks: StackPair, latent, hyper, order: str) -> GmmParams:
    qs = stacks.quant_stack
    latent_q = None
    if qs.context:
        spec = qs.context[0].spec
        latent_q = _quantize_input(latent, spec.p_in, spec.n_i)
    hyper_q = None
    if qs.hyperdecoder:
        spec = qs.hyperdecoder[0].spec
        hyper_q = _quantize_input(hyper, spec.p_in, spec.n_i)
    return run_entropy_stack(latent_q, hyper_q, qs, order=order)


def run_backend(stacks: StackPair, latent, hyper, variant: BackendVariant) -> GmmParams:
    """Priors as computed on one simulated device.

    Integer mode is bit-identical across variants; float mode may differ
    at the ulp level between accumulation orders, and those differences
    can survive discretization.
    """
    if variant.mode == "int":
        return _int_priors(stacks, latent, hyper, variant.order)
    priors = run_float_stack(stacks.float_stack, latent, hyper, variant.order)
    return discretize_priors(priors, stacks.float_stack.head_scale_exp)


def _raster_elements(shape):
    c, h, w = shape
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                yield ch, y, x


def field_tables(params: GmmParams, v_min: int, v_max: int):
    """Per-element CDF tables in decode order (raster position, then channel)."""
    return [
        build_cdf_table(params.element(idx), v_min, v_max)
        for idx in _raster_elements(params.field_shape)
    ]


def _dec_params_fn(stacks: StackPair, hyper, variant: BackendVariant):
    """Decoder-side prior regeneration as a function of the latent canvas."""
    if variant.mode == "int":
        qs = stacks.quant_stack
        hyper_feat = None
        if qs.hyperdecoder:
            spec = qs.hyperdecoder[0].spec
            hyper_q = _quantize_input(hyper, spec.p_in, spec.n_i)
            hyper_feat = _run_chain(hyper_q, qs.hyperdecoder, variant.order, True)

        def params_of(canvas):
            feats = []
            if hyper_feat is not None:
                feats.append(hyper_feat)
            if qs.context:
                spec = qs.context[0].spec
                ctx_in = _quantize_input(canvas, spec.p_in, spec.n_i)
                feats.append(_run_chain(ctx_in, qs.context, variant.order, True))
            fused = QTensor(
                data=np.concatenate([f.data for f in feats], axis=0),
                scale_exp=feats[0].scale_exp,
                bit_depth=16,
            )
            return _gather_forward(qs, fused, variant.order)

        return params_of

    fstack = stacks.float_stack

    def params_of_float(canvas):
        priors = run_float_stack(fstack, canvas, hyper, variant.order)
        return discretize_priors(priors, fstack.head_scale_exp)

    return params_of_float


def _gather_forward(stack: EntropyStack, fused: QTensor, order: str) -> GmmParams:
    """Gather + head on precomputed fused features (mirrors run_entropy_stack)."""
    from .intops import _layer_step, linear_softmax_field

    x = fused
    for i, layer in enumerate(stack.gather[:-1]):
        nxt = stack.gather[i + 1].spec.n_i
        x = _layer_step(x, layer, nxt, order, True)
    head_out = _layer_step(x, stack.head, 16, order, True, activation=False)
    p_e = stack.head_scale_exp
    c = stack.latent_channels
    y = head_out.data.reshape(c, 9, *head_out.data.shape[1:])
    weights = linear_softmax_field(y[:, 0:3].transpose(1, 0, 2, 3), p_e)
    means = y[:, 3:6].transpose(1, 0, 2, 3)
    scales = np.maximum(y[:, 6:9].transpose(1, 0, 2, 3), stack.sigma_min)
    return GmmParams(weights=weights, means=means, scales=scales, scale_exp=p_e)


def roundtrip_experiment(
    stacks: StackPair,
    latent,
    hyper,
    enc_variant: BackendVariant,
    dec_variant: BackendVariant,
    prior_mode: str = "int",
    symbol_bound: int = DEFAULT_SYMBOL_BOUND,
) -> InteropReport:
    """Encode latents with priors from one device, decode on another.

    The decoder regenerates priors autoregressively from its own decoded
    symbols, exactly as a real decoder must.
    """
    latent = np.asarray(latent, dtype=np.int64)
    v_min, v_max = -symbol_bound, symbol_bound
    if latent.min(initial=0) < v_min or latent.max(initial=0) > v_max:
        raise ValueError("latent symbols outside the coder alphabet")
    enc = BackendVariant(enc_variant.id, enc_variant.order, prior_mode)
    dec = BackendVariant(dec_variant.id, dec_variant.order, prior_mode)

    enc_params = run_backend(stacks, latent, hyper, enc)
    stream = rc_encode(
        [latent[idx] for idx in _raster_elements(latent.shape)],
        field_tables(enc_params, v_min, v_max),
        shape=latent.shape,
    )

    params_of = _dec_params_fn(stacks, hyper, dec)
    has_context = bool(stacks.quant_stack.context)
    if not has_context:
        dec_params = params_of(np.zeros_like(latent))
        decoded = rc_decode(stream, field_tables(dec_params, v_min, v_max))
        canvas = np.zeros_like(latent)
        for sym, idx in zip(decoded, _raster_elements(latent.shape)):
            canvas[idx] = sym
    else:
        from .rc import RangeDecoder

        canvas = np.zeros_like(latent)
        decoder = RangeDecoder(stream.payload, stream.count)
        c, h, w = latent.shape
        for y in range(h):
            for x in range(w):
                pos_params = params_of(canvas)
                for ch in range(c):
                    table = build_cdf_table(
                        pos_params.element((ch, y, x)), v_min, v_max
                    )
                    canvas[ch, y, x] = decoder.decode(table)
        dec_params = params_of(canvas)

    true_seq = [int(latent[idx]) for idx in _raster_elements(latent.shape)]
    got_seq = [int(canvas[idx]) for idx in _raster_elements(latent.shape)]
    first = next(
        (i for i, (a, b) in enumerate(zip(true_seq, got_seq)) if a != b), None
    )
    reldiff = _params_max_reldiff(enc_params, dec_params)
    return InteropReport(
        decoded_equal=(first is None),
        first_mismatch=first,
        prior_max_reldiff=reldiff,
    )


def _params_max_reldiff(a: GmmParams, b: GmmParams) -> float:
    worst = 0.0
    for x, y in ((a.weights, b.weights), (a.means, b.means), (a.scales, b.scales)):
        xf = np.asarray(x, np.float64)
        yf = np.asarray(y, np.float64)
        denom = np.maximum(np.maximum(np.abs(xf), np.abs(yf)), 1.0)
        worst = max(worst, float(np.max(np.abs(xf - yf) / denom)))
    return worst


# ---------------------------------------------------------------------------
# Deterministic boundary failure demo
# ---------------------------------------------------------------------------


def _demo_field():
    """Fixed 1x4x4 float prior field with one scale on a rounding boundary."""
    shape = (1, 4, 4)
    n = int(np.prod(shape))
    means = (np.arange(n, dtype=np.float64).reshape(shape) % 5 - 2.0) * 0.75
    scales = np.full(shape, 1.25, dtype=np.float64)
    # element (0,0,1): exactly halfway between two Q8 codes; rounds up,
    # but one ulp lower rounds down.
    boundary_sigma = (256 + 0.5) / 256.0
    scales[0, 0, 1] = boundary_sigma
    weights = np.full((3,) + shape, 1.0 / 3.0, dtype=np.float64)
    priors = FloatPriors(
        weights=weights,
        means=np.broadcast_to(means, (3,) + shape).copy(),
        scales=np.broadcast_to(scales, (3,) + shape).copy(),
    )
    symbols = (np.arange(n, dtype=np.int64).reshape(shape) % 9) - 4
    return priors, symbols


def boundary_failure_demo(
    prior_mode: str = "float", perturb: bool = True
) -> InteropReport:
    """Reproduce the decode-failure phenomenon deterministically.

    One scale value sits within one float ulp of a fixed-point rounding
    boundary; the "decoder device" sees it one ulp lower.  Under float
    priors the resulting CDF tables differ and decoding diverges; under
    integer priors both sides share identical tables and decoding is exact.
    """
    p_e = 8
    priors, symbols = _demo_field()
    enc_params = discretize_priors(priors, p_e)

    if prior_mode == "int" or not perturb:
        dec_params = enc_params
    else:
        pert_scales = priors.scales.copy()
        pert_scales[:, 0, 0, 1] = np.nextafter(pert_scales[:, 0, 0, 1], 0.0)
        dec_params = discretize_priors(
            FloatPriors(priors.weights, priors.means, pert_scales), p_e
        )

    v_min, v_max = -DEFAULT_SYMBOL_BOUND, DEFAULT_SYMBOL_BOUND
    seq = [int(symbols[idx]) for idx in _raster_elements(symbols.shape)]
    stream = rc_encode(seq, field_tables(enc_params, v_min, v_max), shape=symbols.shape)
    decoded = rc_decode(stream, field_tables(dec_params, v_min, v_max))
    first = next((i for i, (a, b) in enumerate(zip(seq, decoded)) if a != b), None)
    return InteropReport(
        decoded_equal=(first is None),
        first_mismatch=first,
        prior_max_reldiff=_params_max_reldiff(enc_params, dec_params),
    )


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


@dataclass
class CalibrationReport:
    layers: list
    trace: list = field(default_factory=list)
    final_objective: float = math.inf
    passes: int = 0

    def pass_objectives(self):
        out = {}
        for entry in self.trace:
            out[entry["pass"]] = entry["objective"]
        return [out[k] for k in sorted(out)]


def int_cross_entropy_bits(latent, params: GmmParams) -> float:
    """Total bits of the latent symbols under integer-pipeline priors."""
    pmf = np.maximum(gmm_pmf_field(latent, params), 1)
    return float(np.sum(-np.log2(pmf / CDF_TOTAL)))


def float_cross_entropy_bits(
    latent, priors: FloatPriors, scale_exp: int, symbol_bound: int = DEFAULT_SYMBOL_BOUND
) -> float:
    """Total bits under float priors, folded over the same finite alphabet."""
    latent = np.asarray(latent, dtype=np.int64)
    erf = np.vectorize(math.erf)

    def mix_cdf(t):
        z = (t - np.asarray(priors.means, np.float64)) / np.asarray(
            priors.scales, np.float64
        )
        phi = 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
        return (np.asarray(priors.weights, np.float64) * phi).sum(axis=0)

    hi = np.where(
        latent >= symbol_bound, 1.0, mix_cdf(latent[None].astype(np.float64) + 0.5)
    )
    lo = np.where(
        latent <= -symbol_bound, 0.0, mix_cdf(latent[None].astype(np.float64) - 0.5)
    )
    pmf = np.maximum(hi - lo, 1.0 / CDF_TOTAL)
    return float(np.sum(-np.log2(pmf)))


def calibrate_shifts(
    fstack: EntropyStackF,
    calib_tensors,
    grid=tuple(range(6, 13)),
    passes: int = 2,
) -> CalibrationReport:
    """Coordinate-descent search of per-layer shift exponents.

    Objective: total cross-entropy of the calibration latents under the
    integer-pipeline priors (the rate proxy).  Layers are visited in
    topological order for a fixed number of passes; ties go to the
    smaller p.
    """
    if not calib_tensors:
        raise ValueError("calibration set is empty")
    grid = tuple(sorted(int(p) for p in grid))

    def objective() -> float:
        try:
            stack = fstack.quantize()
        except Exception:
            return math.inf
        total = 0.0
        for latent, hyper in calib_tensors:
            params = _int_priors(
                StackPair(fstack, stack), latent, hyper, "seq"
            )
            total += int_cross_entropy_bits(latent, params)
        return total

    report = CalibrationReport(layers=[], passes=passes)
    best = objective()
    for pass_no in range(1, passes + 1):
        for junction in fstack.junctions():
            best_p = fstack.junction_p(junction)
            best_obj = math.inf
            for p in grid:
                fstack.set_junction_p(junction, p)
                obj = objective()
                if obj < best_obj:
                    best_obj = obj
                    best_p = p
            fstack.set_junction_p(junction, best_p)
            best = min(best, best_obj)
            report.trace.append(
                {
                    "pass": pass_no,
                    "junction": junction,
                    "p": best_p,
                    "objective": best,
                }
            )
    report.final_objective = best
    for name, layers, cfgs in fstack.chains():
        for i, c in enumerate(cfgs):
            report.layers.append(
                {
                    "subnetwork": name,
                    "index": i,
                    "p": c.p_in,
                    "n_i": c.n_i,
                    "objective": best,
                }
            )
    return report


# ---------------------------------------------------------------------------
# Random stack / data generators (shared by tests and CLI)
# ---------------------------------------------------------------------------


def random_stack(
    rng: np.random.Generator,
    latent_channels: int = 1,
    hyper_channels: int = 2,
    hidden: int = 6,
    ctx_kernel: int = 3,
    with_context: bool = True,
    p_inner: int = 8,
    p_gather: int = 10,
    n_i: int = 16,
) -> EntropyStackF:
    """Seeded random entropy stack with codec-like geometry at desk scale.

    Hyperdecoder: two 3x3 layers; context: one masked layer; gather: seven
    1x1 layers ending in the 9-channels-per-latent GMM head.
    """

    def conv(m, k, n, mask=False, bias_scale=0.05, w_gain=1.0):
        fan_in = m * k * k
        w = rng.normal(0.0, w_gain / math.sqrt(fan_in), size=(m, k, k, n))
        b = rng.normal(0.0, bias_scale, size=n)
        return ConvLayerF(weights=w, bias=b, mask=mask)

    c_y, c_z = latent_channels, hyper_channels
    hyper_layers = [conv(c_z, 3, hidden), conv(hidden, 3, hidden)]
    hyper_cfg = [
        LayerCfg(n_i=n_i, p_in=p_inner, p_out=p_inner),
        LayerCfg(n_i=n_i, p_in=p_inner, p_out=p_gather),
    ]
    if with_context:
        ctx_layers = [conv(c_y, ctx_kernel, hidden, mask=True)]
        ctx_cfg = [LayerCfg(n_i=n_i, p_in=p_inner, p_out=p_gather)]
        g0_in = 2 * hidden
    else:
        ctx_layers, ctx_cfg = [], []
        g0_in = hidden
    head_bias = np.zeros(9 * c_y)
    for i in range(c_y):
        head_bias[9 * i + 3 : 9 * i + 6] = rng.uniform(0.4, 1.2, 3) * rng.choice(
            [-1.0, 1.0], 3
        )
        head_bias[9 * i + 6 : 9 * i + 9] = rng.uniform(0.8, 1.6, 3)
    gather_layers = [
        conv(g0_in, 1, hidden),
        conv(hidden, 1, hidden),
        conv(hidden, 1, hidden),
        conv(hidden, 1, hidden),
        conv(hidden, 1, hidden),
        conv(hidden, 1, hidden),
        conv(hidden, 1, 9 * c_y),
    ]
    gather_layers[-1] = ConvLayerF(
        weights=gather_layers[-1].weights, bias=head_bias
    )
    gather_cfg = [LayerCfg(n_i=n_i, p_in=p_gather, p_out=p_gather) for _ in range(7)]
    return EntropyStackF(
        hyperdecoder=hyper_layers,
        context=ctx_layers,
        gather=gather_layers,
        hyper_cfg=hyper_cfg,
        context_cfg=ctx_cfg,
        gather_cfg=gather_cfg,
        latent_channels=c_y,
    )


def random_latent(
    rng: np.random.Generator,
    shape=(1, 4, 4),
    bound: int = DEFAULT_SYMBOL_BOUND,
) -> np.ndarray:
    """Seeded integer latents, roughly Laplacian, clipped to the alphabet."""
    raw = np.rint(rng.laplace(0.0, bound / 4.0, size=shape)).astype(np.int64)
    return np.clip(raw, -bound, bound)
