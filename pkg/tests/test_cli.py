import json

import numpy as np
import pytest

from detq.cli import main
from detq.harness import (
    BackendVariant,
    calibrate_shifts,
    make_stack_pair,
    random_latent,
    random_stack,
    roundtrip_experiment,
)
from detq.manifest import load_float_model, load_quantized_model, save_float_model
from detq.tensors import ConvLayerF


@pytest.fixture
def model(tmp_path):
    fs = random_stack(np.random.default_rng(23))
    path = tmp_path / "model.json"
    save_float_model(path, fs)
    return path


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(24)
    path = tmp_path / "data.npz"
    np.savez(
        path,
        latent_0=random_latent(rng, (1, 4, 4)),
        hyper_0=rng.normal(size=(2, 4, 4)),
    )
    return path


def test_quantize_writes_model(model, tmp_path, capsys):
    out = tmp_path / "q.json"
    assert main(["quantize", str(model), "--out", str(out)]) == 0
    txt = capsys.readouterr().out
    assert "k=[" in txt  # per-channel shift summary
    q = load_quantized_model(out)
    assert len(q.gather) == 7


def test_quantize_zero_model(tmp_path, capsys):
    fs = random_stack(np.random.default_rng(1))
    for _, layers, _ in fs.chains():
        for i, lyr in enumerate(layers):
            layers[i] = ConvLayerF(
                weights=np.zeros_like(lyr.weights),
                bias=np.zeros_like(lyr.bias),
                mask=lyr.mask,
            )
    path = tmp_path / "zero.json"
    save_float_model(path, fs)
    out = tmp_path / "qz.json"
    assert main(["quantize", str(path), "--out", str(out)]) == 0
    q = load_quantized_model(out)
    for chain in (q.hyperdecoder, q.context, q.gather):
        for lyr in chain:
            assert np.all(lyr.w_q == 0) and np.all(lyr.b_q == 0)


def test_quantize_idempotent_bytes(model, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["quantize", str(model), "--out", str(a)]) == 0
    assert main(["quantize", str(model), "--out", str(b)]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_quantize_unrepresentable_channel_diagnosed(tmp_path, capsys):
    fs = random_stack(np.random.default_rng(2))
    w = fs.hyperdecoder[0].weights.copy()
    w[0, 0, 0, 2] = 1e9  # pathological channel 2
    fs.hyperdecoder[0] = ConvLayerF(weights=w, bias=fs.hyperdecoder[0].bias)
    path = tmp_path / "bad.json"
    save_float_model(path, fs)
    rc = main(["quantize", str(path), "--out", str(tmp_path / "q.json")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "hyperdecoder[0]" in err and "channel 2" in err


def test_verify_pass(model):
    assert main(["verify", str(model)]) == 0


def test_roundtrip_matches_library_call(model, data, capsys):
    rc = main(
        [
            "roundtrip",
            str(model),
            str(data),
            "--enc-variant",
            "seq",
            "--dec-variant",
            "tree",
            "--mode",
            "int",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    fs = load_float_model(model)
    with np.load(data) as z:
        latent, hyper = z["latent_0"], z["hyper_0"]
    want = roundtrip_experiment(
        make_stack_pair(fs),
        latent,
        hyper,
        BackendVariant("e", "seq"),
        BackendVariant("d", "tree"),
        prior_mode="int",
    )
    assert want.to_text() in out


def test_calibrate_matches_library_call(model, data, tmp_path, capsys):
    report = tmp_path / "report.json"
    rc = main(
        [
            "calibrate",
            str(model),
            str(data),
            "--out",
            str(report),
            "--grid",
            "8,9,10",
            "--passes",
            "1",
        ]
    )
    assert rc == 0
    doc = json.loads(report.read_text())
    fs = load_float_model(model)
    with np.load(data) as z:
        want = calibrate_shifts(
            fs, [(z["latent_0"], z["hyper_0"])], grid=(8, 9, 10), passes=1
        )
    assert doc["final_objective_bits"] == pytest.approx(want.final_objective)
    assert doc["layers"] == want.layers


def test_demo_failure_exit_zero(capsys):
    assert main(["demo-failure"]) == 0
    out = capsys.readouterr().out
    assert "demo: PASS" in out


def test_missing_file_is_input_error(capsys):
    assert main(["verify", "no-such-file.json"]) == 2


def test_missing_data_arrays_is_input_error(model, tmp_path):
    empty = tmp_path / "empty.npz"
    np.savez(empty, nothing=np.zeros(1))
    assert main(["roundtrip", str(model), str(empty)]) == 2


def test_usage_error_on_missing_args():
    with pytest.raises(SystemExit) as exc:
        main(["quantize"])
    assert exc.value.code == 2
