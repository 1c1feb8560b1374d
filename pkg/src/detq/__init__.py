"""Deterministic integer entropy-model toolkit.

16-bit post-training quantization of entropy subnetworks (hyperdecoder,
causal context model, gather), exact integer inference with static 32-bit
overflow guarantees, fixed-point Gaussian-mixture CDF tables, a carry-less
range coder, and a cross-device interop harness showing that float priors
can break entropy decoding while integer priors round-trip bit-exactly.
"""

from .gmm import (
    CDF_TOTAL,
    WEIGHT_TOTAL,
    CdfTable,
    GmmParams,
    build_cdf_table,
    gmm_pmf,
    gmm_pmf_field,
    sigma_min_for,
    std_normal_cdf_fixed,
    table_digest,
)
from .harness import (
    BackendVariant,
    CalibrationReport,
    EntropyStackF,
    FloatPriors,
    InteropReport,
    LayerCfg,
    StackPair,
    boundary_failure_demo,
    calibrate_shifts,
    discretize_priors,
    random_latent,
    random_stack,
    roundtrip_experiment,
    run_float_stack,
)
from .intops import (
    AccumulatorOverflowError,
    EntropyStack,
    QTensor,
    leaky_relu_int,
    linear_softmax_field,
    linear_softmax_int,
    masked_conv_forward,
    qconv_forward,
    requantize,
    round_shift,
    run_entropy_stack,
)
from .quantize import (
    ACCUM_BITS,
    K_MAX,
    LayerQuantSpec,
    REFERENCE_DEFAULTS,
    QConvLayer,
    WeightRangeError,
    adjust_shift_for_bias,
    ceil_log2,
    derive_weight_shift,
    quantize_layer,
    quantize_value,
    round_half_away,
)
from .rc import Bitstream, RangeDecoder, RangeEncoder, StreamFormatError, rc_decode, rc_encode
from .tensors import ConvLayerF, DiffReport, FloatTensor, ShapeError, compare_tensors, conv2d_float

__version__ = "0.1.0"
