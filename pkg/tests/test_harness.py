import copy

import numpy as np
import pytest

from detq.harness import (
    BackendVariant,
    boundary_failure_demo,
    calibrate_shifts,
    conv_ordered_float,
    discretize_priors,
    float_cross_entropy_bits,
    int_cross_entropy_bits,
    make_stack_pair,
    random_latent,
    random_stack,
    roundtrip_experiment,
    run_backend,
    run_float_stack,
    _int_priors,
)
from detq.gmm import WEIGHT_TOTAL
from detq.tensors import ConvLayerF


def fixture_pair(seed=21, **kw):
    rng = np.random.default_rng(seed)
    fs = random_stack(rng, **kw)
    latent = random_latent(rng, (1, 4, 4))
    hyper = rng.normal(size=(2, 4, 4))
    return make_stack_pair(fs), latent, hyper


def test_variant_validation():
    with pytest.raises(ValueError):
        BackendVariant("x", order="weird")
    with pytest.raises(ValueError):
        BackendVariant("x", mode="complex")


def test_int_mode_byte_identical_across_variants():
    pair, latent, hyper = fixture_pair()
    outs = [
        run_backend(pair, latent, hyper, BackendVariant(o, o, "int")).tobytes()
        for o in ("seq", "rev", "tree")
    ]
    assert outs[0] == outs[1] == outs[2]


def test_float_cancellation_orders_differ():
    # f32 sequential: (2^24 + 1) - 2^24 = 0; reversed: (-2^24 + 1) + 2^24 = 1
    lyr = ConvLayerF(weights=np.ones((3, 1, 1, 1)), bias=np.zeros(1))
    x = np.array([2.0**24, 1.0, -(2.0**24)]).reshape(3, 1, 1)
    seq = conv_ordered_float(x, lyr, "seq")
    rev = conv_ordered_float(x, lyr, "rev")
    assert seq[0, 0, 0] == 0.0
    assert rev[0, 0, 0] == 1.0


def test_float_vs_int_priors_close_on_random_stack():
    pair, latent, hyper = fixture_pair()
    pi = run_backend(pair, latent, hyper, BackendVariant("a", "seq", "int"))
    pf = run_backend(pair, latent, hyper, BackendVariant("b", "seq", "float"))
    assert pi.scale_exp == pf.scale_exp
    unit = 2.0**-pi.scale_exp
    for a, b in ((pi.means, pf.means), (pi.scales, pf.scales)):
        rel = np.abs(a - b) * unit / np.maximum(np.abs(b) * unit, 0.25)
        assert rel.max() < 0.02
    assert np.abs(pi.weights - pf.weights).max() / WEIGHT_TOTAL < 0.02


def test_discretize_priors_weights_positive_and_normalized():
    rng = np.random.default_rng(3)
    pri = run_float_stack(
        random_stack(rng), np.zeros((1, 3, 3)), rng.normal(size=(2, 3, 3)), "seq"
    )
    q = discretize_priors(pri, 10)
    assert np.all(q.weights > 0)
    assert np.all(q.weights.sum(axis=0) == WEIGHT_TOTAL)


# --- roundtrips -----------------------------------------------------------


def test_int_roundtrip_all_variant_pairs():
    pair, latent, hyper = fixture_pair()
    for eo in ("seq", "rev", "tree"):
        for do in ("seq", "rev", "tree"):
            rep = roundtrip_experiment(
                pair, latent, hyper, BackendVariant("e", eo), BackendVariant("d", do)
            )
            assert rep.decoded_equal and rep.first_mismatch is None
            assert rep.prior_max_reldiff == 0.0


def test_float_roundtrip_same_variant():
    pair, latent, hyper = fixture_pair()
    rep = roundtrip_experiment(
        pair,
        latent,
        hyper,
        BackendVariant("e", "seq"),
        BackendVariant("d", "seq"),
        prior_mode="float",
    )
    assert rep.decoded_equal


def test_roundtrip_without_context_model():
    rng = np.random.default_rng(33)
    fs = random_stack(rng, with_context=False)
    pair = make_stack_pair(fs)
    latent = random_latent(rng, (1, 4, 4))
    hyper = rng.normal(size=(2, 4, 4))
    rep = roundtrip_experiment(
        pair, latent, hyper, BackendVariant("e", "seq"), BackendVariant("d", "tree")
    )
    assert rep.decoded_equal


def test_roundtrip_rejects_out_of_alphabet_symbols():
    pair, latent, hyper = fixture_pair()
    bad = latent.copy()
    bad[0, 0, 0] = 99
    with pytest.raises(ValueError):
        roundtrip_experiment(
            pair, bad, hyper, BackendVariant("e", "seq"), BackendVariant("d", "seq")
        )


# --- failure demo ---------------------------------------------------------


def test_demo_float_priors_fail():
    rep = boundary_failure_demo()
    assert not rep.decoded_equal
    assert rep.first_mismatch == 4  # frozen: cascade from the perturbed element
    assert rep.prior_max_reldiff > 0


def test_demo_integer_priors_roundtrip():
    rep = boundary_failure_demo(prior_mode="int")
    assert rep.decoded_equal and rep.first_mismatch is None


def test_demo_zero_perturbation_control():
    rep = boundary_failure_demo(perturb=False)
    assert rep.decoded_equal


def test_report_text_format():
    txt = boundary_failure_demo().to_text()
    assert "decoded_equal=false" in txt
    assert "first_mismatch=4" in txt


# --- calibration ----------------------------------------------------------


def calib_case(seed=5):
    rng = np.random.default_rng(seed)
    fs = random_stack(rng)
    cal = [(random_latent(rng, (1, 4, 4)), rng.normal(size=(2, 4, 4)))]
    return fs, cal


def test_calibrate_single_candidate_grid():
    fs, cal = calib_case()
    rep = calibrate_shifts(fs, cal, grid=(9,), passes=1)
    assert all(entry["p"] == 9 for entry in rep.layers)
    assert np.isfinite(rep.final_objective)


def test_calibrate_deterministic():
    fs1, cal = calib_case()
    fs2, _ = calib_case()
    r1 = calibrate_shifts(fs1, cal, grid=(8, 9, 10), passes=1)
    r2 = calibrate_shifts(fs2, cal, grid=(8, 9, 10), passes=1)
    assert r1.layers == r2.layers
    assert r1.final_objective == r2.final_objective


def test_calibrate_descends_and_picks_conditional_argmin():
    grid = (8, 9, 10)
    fs, cal = calib_case(seed=6)
    reference = copy.deepcopy(fs)
    rep = calibrate_shifts(fs, cal, grid=grid, passes=2)

    # the objective never increases along the coordinate-descent trace
    objs = [t["objective"] for t in rep.trace]
    assert all(a >= b for a, b in zip(objs, objs[1:]))
    assert rep.final_objective == objs[-1]

    def objective(stack):
        total = 0.0
        pair = make_stack_pair(stack)
        for latent, hyper in cal:
            total += int_cross_entropy_bits(
                latent, _int_priors(pair, latent, hyper, "seq")
            )
        return total

    assert objective(fs) == pytest.approx(rep.final_objective)

    # first junction decision matches the exhaustive conditional argmin,
    # ties broken toward the smaller p
    first = reference.junctions()[0]
    best_p, best_obj = None, float("inf")
    for p in grid:
        trial = copy.deepcopy(reference)
        trial.set_junction_p(first, p)
        obj = objective(trial)
        if obj < best_obj:
            best_p, best_obj = p, obj
    assert rep.trace[0]["junction"] == first
    assert rep.trace[0]["p"] == best_p


def test_calibrate_rejects_empty_set():
    fs, _ = calib_case()
    with pytest.raises(ValueError):
        calibrate_shifts(fs, [])


def test_cross_entropy_helpers_consistent():
    pair, latent, hyper = fixture_pair(seed=8)
    params = _int_priors(pair, latent, hyper, "seq")
    ib = int_cross_entropy_bits(latent, params)
    pri = run_float_stack(pair.float_stack, latent, hyper, "seq")
    fb = float_cross_entropy_bits(latent, pri, pair.float_stack.head_scale_exp)
    assert ib > 0 and fb > 0
    assert abs(ib - fb) / fb < 0.05


def test_random_latent_within_alphabet():
    rng = np.random.default_rng(9)
    lat = random_latent(rng, (2, 8, 8), bound=8)
    assert lat.min() >= -8 and lat.max() <= 8
