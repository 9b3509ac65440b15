"""Seeded self-checks behind the `verify` subcommand.

Each check fuzzes one contract of the library: rotation orthogonality, the
never-increases-max-abs guarantee, the zigzag block-mean bound, exact product
preservation through the transform, and quantizer round trips.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .permute import zigzag_mean_bound, zigzag_permutation
from .pipeline import PipelineConfig, calibrate, quantized_forward, transform_activation, transform_weight
from .quant import QuantConfig, dequantize, quantize
from .rotate import RotationSpec, apply_block_rotation, greedy_rotation
from .tensor import Axis, matmul

__all__ = ["CheckResult", "run_verify", "format_results"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _outlier_block(rng, rows, dim, ratio):
    x = rng.normal(0.0, 1.0, size=(rows, dim))
    col = rng.integers(dim)
    x[rng.integers(rows), col] = ratio * np.sign(rng.normal() or 1.0)
    return x


def _check_rotation_orthogonality(trials, rng):
    worst = 0.0
    for _ in range(trials):
        dim = int(rng.choice([16, 32, 64]))
        x = _outlier_block(rng, 8, dim, ratio=float(rng.uniform(10, 100)))
        r = greedy_rotation(x, RotationSpec(block_size=dim, steps=8, seed=int(rng.integers(2**32))))
        worst = max(worst, float(np.max(np.abs(r.m @ r.m.T - np.eye(dim)))))
    ok = worst <= 1e-9
    return CheckResult("rotation-orthogonality", ok, f"max |R R^T - I| = {worst:.2e}")


def _check_rotation_max_abs(trials, rng):
    failures = 0
    for _ in range(trials):
        dim = int(rng.choice([16, 32, 64]))
        if rng.uniform() < 0.5:
            x = rng.normal(0.0, 1.0, size=(8, dim))
        else:
            x = _outlier_block(rng, 8, dim, ratio=float(rng.uniform(10, 200)))
        r = greedy_rotation(x, RotationSpec(block_size=dim, steps=8, seed=int(rng.integers(2**32))))
        if np.max(np.abs(x @ r.m)) > np.max(np.abs(x)) + 1e-9:
            failures += 1
    return CheckResult(
        "rotation-never-increases-max-abs", failures == 0, f"{failures}/{trials} violations"
    )


def _check_zigzag_bound(trials, rng):
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(1, 9))
        bs = 1 << n
        o = np.sort(rng.uniform(0.0, 100.0, size=bs * k))[::-1].copy()
        bound = zigzag_mean_bound(o, bs, k)
        perm = zigzag_permutation(o, bs)
        means = o[perm.order].reshape(-1, bs).mean(axis=1)
        if np.any(means > bound + 1e-12):
            failures += 1
    return CheckResult("zigzag-block-mean-bound", failures == 0, f"{failures}/{trials} violations")


def _check_pipeline_equivalence(trials, rng):
    worst = 0.0
    for _ in range(trials):
        x = rng.normal(0.0, 1.0, size=(16, 64))
        w = rng.normal(0.0, 1.0, size=(64, 24))
        flags = rng.uniform(size=4) < 0.5
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = PipelineConfig(
                rotation_spec=RotationSpec(block_size=16, steps=2, seed=int(rng.integers(2**32))),
                use_smooth=bool(flags[0]),
                use_r1=bool(flags[1]),
                use_perm=bool(flags[2]),
                use_r2=bool(flags[3]),
            )
        bundle = calibrate(x, w, cfg)
        ref = matmul(x, w)
        got = matmul(transform_activation(x, bundle), transform_weight(w, bundle))
        worst = max(worst, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
    ok = worst <= 1e-8
    return CheckResult("pipeline-product-preservation", ok, f"max relative error = {worst:.2e}")


def _check_quant_roundtrip(trials, rng):
    worst_slack = -np.inf
    failures = 0
    for _ in range(trials):
        x = rng.normal(0.0, float(rng.uniform(0.1, 10.0)), size=(8, 32))
        bits = int(rng.integers(2, 9))
        cfg = QuantConfig(bits=bits, clip_ratio=1.0, axis=Axis.ROWS)
        q = quantize(x, cfg)
        if q.codes.max() > (1 << bits) - 1:
            failures += 1
            continue
        err = np.max(np.abs(x - dequantize(q)), axis=1)
        slack = err - (q.deltas / 2) * (1 + 1e-9)
        worst_slack = max(worst_slack, float(slack.max()))
        if (slack > 1e-12).any():
            failures += 1
    return CheckResult(
        "quantizer-roundtrip-bound", failures == 0, f"{failures}/{trials} violations"
    )


def _check_forward_determinism(trials, rng):
    seed = int(rng.integers(2**32))
    local = np.random.default_rng(seed)
    x = local.normal(0.0, 1.0, size=(16, 64))
    x[3, 7] = 250.0
    w = local.normal(0.0, 0.05, size=(64, 24))
    cfg = PipelineConfig(rotation_spec=RotationSpec(block_size=16, steps=4, seed=seed))
    reports = []
    for _ in range(2):
        bundle = calibrate(x, w, cfg)
        _, report = quantized_forward(x, w, bundle, cfg)
        reports.append(report.to_dict())
    ok = reports[0] == reports[1]
    return CheckResult("forward-determinism", ok, "bit-identical reports" if ok else "reports differ")


def run_verify(trials: int = 50, seed: int = 0, inject_fault: bool = False) -> list[CheckResult]:
    """Run every check with `trials` fuzz iterations; deterministic per seed."""
    rng = np.random.default_rng(seed)
    results = [
        _check_rotation_orthogonality(trials, rng),
        _check_rotation_max_abs(trials, rng),
        _check_zigzag_bound(trials, rng),
        _check_pipeline_equivalence(trials, rng),
        _check_quant_roundtrip(trials, rng),
        _check_forward_determinism(trials, rng),
    ]
    if inject_fault:
        results.append(CheckResult("injected-fault", False, "intentional failure for self-test"))
    return results


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [
        f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL'}  {r.detail}" for r in results
    ]
    return "\n".join(lines)
