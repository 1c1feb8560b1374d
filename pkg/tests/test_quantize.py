import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detq.quantize import (
    K_MAX,
    WeightRangeError,
    adjust_shift_for_bias,
    ceil_log2,
    derive_weight_shift,
    quantize_activation_tensor,
    quantize_layer,
    quantize_value,
    round_half_away,
)
from detq.tensors import ConvLayerF

from oracles import (
    adjust_shift_for_bias_oracle,
    ceil_log2_fr,
    derive_weight_shift_oracle,
    quantize_value_oracle,
)


def layer(w, b=None, mask=False):
    w = np.asarray(w, dtype=np.float64)
    if b is None:
        b = np.zeros(w.shape[3])
    return ConvLayerF(weights=w, bias=np.asarray(b, dtype=np.float64), mask=mask)


# --- quantize_value -------------------------------------------------------


def test_quantize_value_examples():
    assert quantize_value(0.0, 5, 16) == 0
    assert quantize_value(1.0, 8, 16) == 256
    assert quantize_value(200.0, 8, 9) == 255  # 51200 clamps to 2^8 - 1


@given(
    st.floats(-1000, 1000, allow_nan=False),
    st.integers(0, 15),
    st.integers(2, 16),
)
def test_quantize_value_matches_oracle(x, p, b):
    assert quantize_value(x, p, b) == quantize_value_oracle(x, p, b)


@given(st.floats(-100, 100), st.integers(0, 12))
def test_quant_dequant_error_bound(x, p):
    # within the representable range the quantization error is at most half a step
    q = quantize_value(x, p, 16)
    if abs(q) < (1 << 15) - 1:
        assert abs(x - q * math.ldexp(1.0, -p)) <= math.ldexp(1.0, -p - 1)


# --- ceil_log2 ------------------------------------------------------------


@given(st.floats(min_value=1e-30, max_value=1e30))
def test_ceil_log2_matches_exact_oracle(x):
    assert ceil_log2(x) == ceil_log2_fr(Fraction(x))


def test_ceil_log2_exact_powers():
    for e in range(-20, 21):
        assert ceil_log2(math.ldexp(1.0, e)) == e
        assert ceil_log2(Fraction(2) ** e) == e


# --- derive_weight_shift / adjust_shift_for_bias --------------------------


def test_derive_weight_shift_examples():
    assert derive_weight_shift([1.2, -2.5], 32, 16) == 14  # sum 3.7
    assert derive_weight_shift([1.0], 32, 16) == 16
    assert derive_weight_shift([0.0, 0.0], 32, 16) == K_MAX


def test_derive_weight_shift_monotone_in_n_i():
    w = [0.3, -0.7, 1.1]
    assert derive_weight_shift(w, 32, 9) >= derive_weight_shift(w, 32, 16)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_derive_weight_shift_matches_oracle(ws):
    assert derive_weight_shift(ws, 32, 16) == derive_weight_shift_oracle(ws, 32, 16)


def test_adjust_shift_for_bias_examples():
    assert adjust_shift_for_bias(7, 0.0, 8) == 7
    assert adjust_shift_for_bias(14, 2.5, 8) == 13  # min(21, 14) - 1
    assert adjust_shift_for_bias(14, 0.5, 8) == 13  # min(23, 14) - 1


@given(
    st.integers(0, 20),
    st.floats(-100, 100),
    st.integers(0, 15),
)
def test_adjust_shift_matches_oracle(k, b, p):
    assert adjust_shift_for_bias(k, b, p) == adjust_shift_for_bias_oracle(k, b, p)


# --- quantize_layer -------------------------------------------------------


def test_identity_layer_hits_representability_cap():
    # the derived shift 16 would need W_q = 65536; the int16 guard caps it
    q = quantize_layer(layer(np.ones((1, 1, 1, 1))), n_i=16, p_in=8, p_out=8)
    assert q.spec.k[0] == K_MAX
    assert q.w_q[0, 0, 0, 0] == 16384


def test_all_zero_layer():
    q = quantize_layer(layer(np.zeros((2, 3, 3, 2))), n_i=16, p_in=8, p_out=8)
    assert np.all(q.w_q == 0) and np.all(q.b_q == 0)


def test_weights_never_clipped():
    rng = np.random.default_rng(5)
    lyr = layer(rng.normal(size=(3, 3, 3, 4)), b=rng.normal(size=4))
    q = quantize_layer(lyr, n_i=16, p_in=8, p_out=8)
    for j in range(4):
        k = int(q.spec.k[j])
        want = round_half_away(lyr.weights[:, :, :, j] * math.ldexp(1.0, k))
        np.testing.assert_array_equal(q.w_q[:, :, :, j], want.astype(np.int64))


def test_channel_sum_within_accumulator_budget():
    rng = np.random.default_rng(6)
    for n_i in (9, 16):
        # weight magnitudes < 2 so every channel is int16-representable
        lyr = layer(rng.normal(0, 0.3, size=(4, 3, 3, 5)), b=rng.normal(size=5))
        q = quantize_layer(lyr, n_i=n_i, p_in=8, p_out=8)
        sums = np.abs(q.w_q).sum(axis=(0, 1, 2))
        x_max = (1 << (n_i - 1)) - 1
        assert np.all(sums * x_max + np.abs(q.b_q) <= (1 << 31) - 1)


def test_unrepresentable_weight_rejected():
    with pytest.raises(WeightRangeError):
        quantize_layer(layer(np.full((1, 1, 1, 1), 1e9)), n_i=16, p_in=8, p_out=8)


# --- quantize_activation_tensor ------------------------------------------


def test_activation_tensor_examples():
    q = quantize_layer(layer(np.ones((1, 1, 1, 1)) * 0.5), n_i=16, p_in=8, p_out=8)
    spec = q.spec
    zeros = quantize_activation_tensor(np.zeros((1, 2, 2)), spec)
    assert np.all(zeros.data == 0)
    ones = quantize_activation_tensor(np.ones((1, 2, 2)), spec)
    assert np.all(ones.data == 256)


def test_activation_tensor_matches_elementwise_oracle():
    rng = np.random.default_rng(7)
    q = quantize_layer(layer(np.ones((1, 1, 1, 1)) * 0.5), n_i=9, p_in=8, p_out=8)
    x = rng.normal(0, 2, size=(2, 3, 3))
    got = quantize_activation_tensor(x, q.spec)
    for idx in np.ndindex(*x.shape):
        assert got.data[idx] == quantize_value_oracle(x[idx], 8, 9)
