"""Command-line workflows over the quantizer, coder, and interop harness.

Exit codes: 0 success, 1 verification or roundtrip failure, 2 input or
format error.  All randomness sits behind --seed; identical inputs produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import (
    BackendVariant,
    StackPair,
    boundary_failure_demo,
    calibrate_shifts,
    roundtrip_experiment,
)
from .intops import AccumulatorOverflowError, QTensor, run_entropy_stack
from .manifest import (
    ManifestError,
    load_float_model,
    load_quantized_model,
    model_dtype,
    save_quantized_model,
)
from .quantize import WeightRangeError
from .tensors import ShapeError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def _load_data(path):
    """Load latent/hyper pairs from an .npz: latent_0, hyper_0, latent_1, ..."""
    try:
        with np.load(path) as z:
            pairs = []
            i = 0
            while f"latent_{i}" in z:
                if f"hyper_{i}" not in z:
                    raise ManifestError(f"hyper_{i} missing from {path}")
                pairs.append((z[f"latent_{i}"], z[f"hyper_{i}"]))
                i += 1
    except (OSError, ValueError, KeyError) as e:
        raise ManifestError(f"cannot read data file {path}: {e}") from e
    if not pairs:
        raise ManifestError(f"no latent_0/hyper_0 arrays in {path}")
    return pairs


def cmd_quantize(args) -> int:
    stack = load_float_model(args.model)
    try:
        qstack = stack.quantize()
    except WeightRangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    save_quantized_model(args.out, qstack)
    for name, chain in (
        ("hyperdecoder", qstack.hyperdecoder),
        ("context", qstack.context),
        ("gather", qstack.gather),
    ):
        for i, lyr in enumerate(chain):
            ks = ",".join(str(int(v)) for v in lyr.spec.k)
            print(f"{name}[{i}] p_in={lyr.spec.p_in} p_out={lyr.spec.p_out} k=[{ks}]")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    stack = load_float_model(args.model)
    pairs = _load_data(args.data)
    grid = tuple(int(v) for v in args.grid.split(","))
    report = calibrate_shifts(stack, pairs, grid=grid, passes=args.passes)
    doc = {
        "final_objective_bits": report.final_objective,
        "passes": report.passes,
        "layers": report.layers,
        "trace": [
            {**t, "junction": list(t["junction"])} for t in report.trace
        ],
    }
    with open(args.out, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"final objective: {report.final_objective:.3f} bits -> {args.out}")
    return EXIT_OK


def _adversarial_ok(layer) -> bool:
    """Worst-case accumulator (sign-matched extreme input) fits 32 bits."""
    x_max = (1 << (layer.spec.n_i - 1)) - 1
    worst = np.abs(layer.w_q).sum(axis=(0, 1, 2)) * x_max + np.abs(layer.b_q)
    return int(worst.max(initial=0)) <= (1 << 31) - 1


def cmd_verify(args) -> int:
    if model_dtype(args.model) == "float32":
        stack = load_float_model(args.model).quantize()
    else:
        stack = load_quantized_model(args.model)
    ok = True
    for name, chain in (
        ("hyperdecoder", stack.hyperdecoder),
        ("context", stack.context),
        ("gather", stack.gather),
    ):
        for i, lyr in enumerate(chain):
            if not _adversarial_ok(lyr):
                print(f"FAIL overflow bound: {name}[{i}]")
                ok = False
    rng = np.random.default_rng(args.seed)
    h = w = 6
    outs = []
    for order in ("seq", "rev", "tree"):
        rng = np.random.default_rng(args.seed)
        latent = hyper = None
        if stack.context:
            spec = stack.context[0].spec
            lim = (1 << (spec.n_i - 1)) - 1
            latent = QTensor(
                rng.integers(-lim, lim + 1, (stack.context[0].in_channels, h, w)),
                spec.p_in,
                spec.n_i,
            )
        if stack.hyperdecoder:
            spec = stack.hyperdecoder[0].spec
            lim = (1 << (spec.n_i - 1)) - 1
            hyper = QTensor(
                rng.integers(-lim, lim + 1, (stack.hyperdecoder[0].in_channels, h, w)),
                spec.p_in,
                spec.n_i,
            )
        try:
            outs.append(run_entropy_stack(latent, hyper, stack, order=order).tobytes())
        except AccumulatorOverflowError as e:
            print(f"FAIL overflow at runtime ({order}): {e}")
            ok = False
    if len(outs) == 3 and not (outs[0] == outs[1] == outs[2]):
        print("FAIL order invariance: priors differ between accumulation orders")
        ok = False
    print("verify: PASS" if ok else "verify: FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_roundtrip(args) -> int:
    fstack = load_float_model(args.model)
    pairs = _load_data(args.data)
    stacks = StackPair(fstack, fstack.quantize())
    all_ok = True
    for i, (latent, hyper) in enumerate(pairs):
        report = roundtrip_experiment(
            stacks,
            latent,
            hyper,
            BackendVariant("enc", args.enc_variant),
            BackendVariant("dec", args.dec_variant),
            prior_mode=args.mode,
        )
        print(f"case {i}:")
        print(report.to_text(), end="")
        all_ok = all_ok and report.decoded_equal
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_demo_failure(args) -> int:
    f = boundary_failure_demo(prior_mode="float", perturb=True)
    i = boundary_failure_demo(prior_mode="int", perturb=True)
    print("float priors, 1-ulp perturbed decoder:")
    print(f.to_text(), end="")
    print("integer priors, same perturbation:")
    print(i.to_text(), end="")
    ok = (not f.decoded_equal) and i.decoded_equal
    print("demo:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="detq",
        description="deterministic integer entropy-model toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="quantize a float model manifest")
    q.add_argument("model")
    q.add_argument("--out", required=True)
    q.set_defaults(fn=cmd_quantize)

    c = sub.add_parser("calibrate", help="search per-layer shift exponents")
    c.add_argument("model")
    c.add_argument("data", help=".npz with latent_i / hyper_i arrays")
    c.add_argument("--out", required=True)
    c.add_argument("--grid", default="6,7,8,9,10,11,12")
    c.add_argument("--passes", type=int, default=2)
    c.set_defaults(fn=cmd_calibrate)

    v = sub.add_parser("verify", help="overflow bound + order-invariance checks")
    v.add_argument("model")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=cmd_verify)

    r = sub.add_parser("roundtrip", help="cross-device encode/decode experiment")
    r.add_argument("model", help="float model manifest")
    r.add_argument("data", help=".npz with latent_i / hyper_i arrays")
    r.add_argument("--enc-variant", choices=("seq", "rev", "tree"), default="seq")
    r.add_argument("--dec-variant", choices=("seq", "rev", "tree"), default="seq")
    r.add_argument("--mode", choices=("float", "int"), default="int")
    r.set_defaults(fn=cmd_roundtrip)

    d = sub.add_parser("demo-failure", help="deterministic decode-failure demo")
    d.set_defaults(fn=cmd_demo_failure)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ManifestError, WeightRangeError, ShapeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
