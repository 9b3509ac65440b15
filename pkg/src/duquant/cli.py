"""Command-line surface: synthesize data, quantize, verify invariants, sweep ablations.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .calib import SynthSpec, synth_activations
from .pipeline import (
    PipelineConfig,
    ablation_sweep,
    calibrate,
    quantized_forward,
    save_bundle,
    transform_activation,
    transform_weight,
)
from .quant import QuantConfig, quantize
from .rotate import RotationSpec
from .tensor import Axis, NpyFormatError, ShapeError, read_npy, write_npy
from .verify import format_results, run_verify

__all__ = ["main"]

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _default_seed() -> int:
    return int(os.environ.get("DUQUANT_SEED", "0"))


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bits-a", type=int, default=4, help="activation bits (default 4)")
    p.add_argument("--bits-w", type=int, default=4, help="weight bits (default 4)")
    p.add_argument("--clip-a", type=float, default=0.9, help="activation clipping ratio")
    p.add_argument("--clip-w", type=float, default=0.8, help="weight clipping ratio")
    p.add_argument("--alpha", type=float, default=0.6, help="smoothing migration strength")
    p.add_argument("--block-size", type=int, default=128, help="rotation block size (power of two)")
    p.add_argument("--steps", type=int, default=256, help="greedy rotation search steps")
    p.add_argument("--seed", type=int, default=None, help="seed (falls back to DUQUANT_SEED)")


def _pipeline_config(args, perm_mode: str = "zigzag", use_perm: bool = True) -> PipelineConfig:
    seed = args.seed if args.seed is not None else _default_seed()
    return PipelineConfig(
        alpha=args.alpha,
        rotation_spec=RotationSpec(block_size=args.block_size, steps=args.steps, seed=seed),
        use_perm=use_perm,
        perm_mode=perm_mode,
        act_quant=QuantConfig(bits=args.bits_a, clip_ratio=args.clip_a, axis=Axis.ROWS),
        weight_quant=QuantConfig(bits=args.bits_w, clip_ratio=args.clip_w, axis=Axis.COLS),
    )


def _report_json(cfg: PipelineConfig, report) -> dict:
    return {
        "config": {
            "bits_a": cfg.act_quant.bits,
            "bits_w": cfg.weight_quant.bits,
            "clip_a": cfg.act_quant.clip_ratio,
            "clip_w": cfg.weight_quant.clip_ratio,
            "alpha": cfg.alpha,
            "block_size": cfg.rotation_spec.block_size,
            "steps": cfg.rotation_spec.steps,
            "seed": cfg.rotation_spec.seed,
            "perm_mode": cfg.perm_mode,
            "flags": {
                "smooth": cfg.use_smooth,
                "r1": cfg.use_r1,
                "perm": cfg.use_perm,
                "r2": cfg.use_r2,
            },
        },
        "stages": [[name, val] for name, val in report.stage_trace],
        "metrics": report.metrics(),
    }


def cmd_synth(args) -> int:
    channels = tuple(int(c) for c in args.normal_channels.split(",") if c != "")
    spec = SynthSpec(
        rows=args.rows,
        cols=args.cols,
        base_scale=args.base_scale,
        normal_channels=channels,
        normal_magnitude=args.normal_mag,
        massive_count=args.massive,
        massive_magnitude=args.massive_mag,
        seed=args.seed if args.seed is not None else _default_seed(),
    )
    write_npy(args.output, synth_activations(spec))
    return EXIT_OK


def cmd_quantize(args) -> int:
    x = read_npy(args.activations)
    w = read_npy(args.weights)
    cfg = _pipeline_config(args, perm_mode="zigzag" if args.perm != "random" else "random",
                           use_perm=args.perm != "none")
    bundle = calibrate(x, w, cfg)
    _, report = quantized_forward(x, w, bundle, cfg)
    save_bundle(bundle, cfg, args.out_dir)
    x_q = quantize(transform_activation(x, bundle), cfg.act_quant)
    w_q = quantize(transform_weight(w, bundle), cfg.weight_quant)
    write_npy(os.path.join(args.out_dir, "x_codes.npy"), x_q.codes.astype(np.float64))
    write_npy(os.path.join(args.out_dir, "x_deltas.npy"), x_q.deltas[None, :])
    write_npy(os.path.join(args.out_dir, "x_zeros.npy"), x_q.zeros[None, :])
    write_npy(os.path.join(args.out_dir, "w_codes.npy"), w_q.codes.astype(np.float64))
    write_npy(os.path.join(args.out_dir, "w_deltas.npy"), w_q.deltas[None, :])
    write_npy(os.path.join(args.out_dir, "w_zeros.npy"), w_q.zeros[None, :])
    payload = _report_json(cfg, report)
    report_path = args.report or os.path.join(args.out_dir, "report.json")
    with open(report_path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    print(json.dumps(payload["metrics"], indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    inject = os.environ.get("DUQUANT_INJECT_FAULT", "") == "1"
    results = run_verify(trials=args.trials, seed=seed, inject_fault=inject)
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


def cmd_sweep(args) -> int:
    x = read_npy(args.activations)
    w = read_npy(args.weights)
    cfg = _pipeline_config(args)
    results = ablation_sweep(x, w, cfg)
    payload = {name: report.to_dict() for name, report in results.items()}
    out = json.dumps(payload, indent=2)
    if args.report:
        with open(args.report, "w") as f:
            f.write(out)
            f.write("\n")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duquant",
        description="Low-bit weight-activation quantization via smoothing, "
        "outlier-targeted rotations, and zigzag channel permutation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic activation matrix as NPY")
    p.add_argument("--rows", type=int, default=256)
    p.add_argument("--cols", type=int, default=1024)
    p.add_argument("--base-scale", type=float, default=0.02)
    p.add_argument("--normal-channels", default="", help="comma-separated channel indices")
    p.add_argument("--normal-mag", type=float, default=5.0)
    p.add_argument("--massive", type=int, default=0, help="number of massive outlier entries")
    p.add_argument("--massive-mag", type=float, default=1400.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("quantize", help="calibrate, transform, quantize, and report")
    p.add_argument("activations", help="activation NPY (tokens x in_channels)")
    p.add_argument("weights", help="weight NPY (in_channels x out_channels)")
    _add_pipeline_flags(p)
    p.add_argument("--perm", choices=["none", "zigzag", "random"], default="zigzag")
    p.add_argument("--out-dir", required=True, help="bundle output directory")
    p.add_argument("--report", default=None, help="report JSON path (default <out-dir>/report.json)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("verify", help="run the seeded invariant suite")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="component-mask ablation on given tensors")
    p.add_argument("activations")
    p.add_argument("weights")
    _add_pipeline_flags(p)
    p.add_argument("--report", default=None, help="write the sweep JSON here as well")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NpyFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
