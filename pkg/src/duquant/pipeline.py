"""Composition of the full invertible transform and the quantized forward pass.

The transform chain is smoothing, first block rotation, zigzag permutation,
second block rotation. Activations get the chain, weights get its inverse,
so the product is preserved exactly; quantizing both transformed operands is
what the pipeline is for.
"""

from __future__ import annotations

import dataclasses
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .permute import Permutation, apply_permutation, block_variance, random_permutation, zigzag_permutation
from .quant import QuantConfig, dequantize, quantize
from .rotate import BlockDiagonalRotation, RotationSpec, apply_block_rotation, assemble_block_diagonal
from .smooth import SmoothingScale, compute_smoothing
from .tensor import Axis, ShapeError, as_matrix, col_absmax, matmul, row_absmax, write_npy

__all__ = [
    "TransformBundle",
    "PipelineConfig",
    "ErrorReport",
    "calibrate",
    "transform_activation",
    "transform_weight",
    "quantized_forward",
    "ablation_sweep",
    "save_bundle",
    "ABLATION_MASKS",
]


@dataclass(eq=False)
class TransformBundle:
    """The calibrated transform: any subset of the four stages may be present."""

    block_size: int
    smoothing: SmoothingScale | None = None
    r1: BlockDiagonalRotation | None = None
    perm: Permutation | None = None
    r2: BlockDiagonalRotation | None = None


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 0.6
    rotation_spec: RotationSpec = field(default_factory=RotationSpec)
    use_smooth: bool = True
    use_r1: bool = True
    use_perm: bool = True
    use_r2: bool = True
    act_quant: QuantConfig = QuantConfig(bits=4, clip_ratio=0.9, axis=Axis.ROWS)
    weight_quant: QuantConfig = QuantConfig(bits=4, clip_ratio=0.8, axis=Axis.COLS)
    perm_mode: str = "zigzag"  # or "random", the shuffle baseline

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.perm_mode not in ("zigzag", "random"):
            raise ValueError(f"perm_mode must be 'zigzag' or 'random', got {self.perm_mode!r}")
        if self.use_perm and not self.use_r2:
            warnings.warn(
                "permutation without a second rotation leaves block contents unmixed",
                stacklevel=2,
            )


@dataclass(eq=False)
class ErrorReport:
    fp_reference_norm: float
    quant_relative_error: float
    act_max_abs_before: float
    act_max_abs_after: float
    block_variance_before: float
    block_variance_after: float
    stage_trace: list  # (stage name, activation max-abs after the stage)

    def metrics(self) -> dict:
        return {
            "fp_reference_norm": self.fp_reference_norm,
            "quant_relative_error": self.quant_relative_error,
            "act_max_abs_before": self.act_max_abs_before,
            "act_max_abs_after": self.act_max_abs_after,
            "block_variance_before": self.block_variance_before,
            "block_variance_after": self.block_variance_after,
        }

    def to_dict(self) -> dict:
        out = self.metrics()
        out["stage_trace"] = [[name, val] for name, val in self.stage_trace]
        return out


def calibrate(x_calib, w, cfg: PipelineConfig) -> TransformBundle:
    """Fit the enabled stages on calibration data, each on the output of the last.

    Smoothing statistics come from the raw operands; the first rotation sees
    the smoothed activation; the permutation profile is taken after that
    rotation; the second rotation sees the permuted activation.
    """
    x = as_matrix(x_calib, "x_calib")
    w = as_matrix(w, "w")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"x cols {x.shape[1]} != w rows {w.shape[0]}")
    spec = cfg.rotation_spec
    bundle = TransformBundle(block_size=spec.block_size)
    cur = x
    if cfg.use_smooth:
        bundle.smoothing = compute_smoothing(col_absmax(cur), row_absmax(w), cfg.alpha)
        cur = cur / bundle.smoothing.scales[None, :]
    if cfg.use_r1:
        bundle.r1 = assemble_block_diagonal(cur, spec)
        cur = apply_block_rotation(cur, bundle.r1)
    if cfg.use_perm:
        profile = col_absmax(cur)
        if cfg.perm_mode == "random":
            bundle.perm = random_permutation(
                profile.shape[0], np.random.default_rng(spec.seed + 2)
            )
        else:
            bundle.perm = zigzag_permutation(profile, spec.block_size)
        cur = apply_permutation(cur, bundle.perm)
    if cfg.use_r2:
        spec2 = dataclasses.replace(spec, seed=spec.seed + 1)
        bundle.r2 = assemble_block_diagonal(cur, spec2)
    return bundle


def _activation_stages(x, bundle: TransformBundle):
    """Yield (stage name, activation) after each present stage."""
    cur = as_matrix(x, "x")
    if bundle.smoothing is not None:
        scales = bundle.smoothing.scales
        if cur.shape[1] != scales.shape[0]:
            raise ShapeError(f"x cols {cur.shape[1]} != smoothing length {scales.shape[0]}")
        cur = cur / scales[None, :]
        yield "smooth", cur
    if bundle.r1 is not None:
        cur = apply_block_rotation(cur, bundle.r1)
        yield "rotation1", cur
    if bundle.perm is not None:
        cur = apply_permutation(cur, bundle.perm)
        yield "permute", cur
    if bundle.r2 is not None:
        cur = apply_block_rotation(cur, bundle.r2)
        yield "rotation2", cur


def transform_activation(x, bundle: TransformBundle) -> np.ndarray:
    """Apply the present stages in order: smooth, rotate, permute, rotate."""
    cur = as_matrix(x, "x")
    for _, cur in _activation_stages(x, bundle):
        pass
    return cur


def transform_weight(w, bundle: TransformBundle) -> np.ndarray:
    """Apply the inverse stages to the weight so the product is preserved.

    Works on the transposed weight, where the inverse chain takes the same
    column-wise form as the activation chain (with smoothing multiplied
    instead of divided).
    """
    cur = np.ascontiguousarray(as_matrix(w, "w").T)
    if bundle.smoothing is not None:
        scales = bundle.smoothing.scales
        if cur.shape[1] != scales.shape[0]:
            raise ShapeError(f"w rows {cur.shape[1]} != smoothing length {scales.shape[0]}")
        cur = cur * scales[None, :]
    if bundle.r1 is not None:
        cur = apply_block_rotation(cur, bundle.r1)
    if bundle.perm is not None:
        cur = apply_permutation(cur, bundle.perm)
    if bundle.r2 is not None:
        cur = apply_block_rotation(cur, bundle.r2)
    return np.ascontiguousarray(cur.T)


def _layout_variance(x, block_size: int) -> float:
    profile = col_absmax(x)
    if profile.shape[0] % block_size != 0:
        return 0.0
    return block_variance(profile, Permutation.identity(profile.shape[0]), block_size)


def quantized_forward(x, w, bundle: TransformBundle, cfg: PipelineConfig):
    """Transform both operands, quantize, dequantize, multiply, and report errors."""
    x = as_matrix(x, "x")
    w = as_matrix(w, "w")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"x cols {x.shape[1]} != w rows {w.shape[0]}")
    bs = bundle.block_size
    trace = [("input", float(np.max(np.abs(x))))]
    var_before = _layout_variance(x, bs)
    var_after = var_before
    past_perm = False
    x_hat = x
    for name, staged in _activation_stages(x, bundle):
        trace.append((name, float(np.max(np.abs(staged)))))
        if name == "permute":
            var_after = _layout_variance(staged, bs)
            past_perm = True
        elif not past_perm:
            # variance is reported at the permutation point: entering vs leaving
            var_before = _layout_variance(staged, bs)
            var_after = var_before
        x_hat = staged
    w_hat = transform_weight(w, bundle)
    y = matmul(dequantize(quantize(x_hat, cfg.act_quant)), dequantize(quantize(w_hat, cfg.weight_quant)))
    ref = matmul(x, w)
    ref_norm = float(np.linalg.norm(ref))
    diff_norm = float(np.linalg.norm(y - ref))
    if diff_norm == 0.0:
        rel = 0.0
    elif ref_norm == 0.0:
        rel = float("inf")
    else:
        rel = diff_norm / ref_norm
    report = ErrorReport(
        fp_reference_norm=ref_norm,
        quant_relative_error=rel,
        act_max_abs_before=float(np.max(np.abs(x))),
        act_max_abs_after=float(np.max(np.abs(x_hat))),
        block_variance_before=var_before,
        block_variance_after=var_after,
        stage_trace=trace,
    )
    return y, report


ABLATION_MASKS = (
    ("S", (True, False, False, False)),
    ("R1", (False, True, False, False)),
    ("S+R1", (True, True, False, False)),
    ("R1+P+R2", (False, True, True, True)),
    ("full", (True, True, True, True)),
)


def ablation_sweep(x, w, base_cfg: PipelineConfig) -> dict:
    """Quantized forward error for each component mask, keyed by mask name."""
    results = {}
    for name, (s, r1, p, r2) in ABLATION_MASKS:
        cfg = dataclasses.replace(base_cfg, use_smooth=s, use_r1=r1, use_perm=p, use_r2=r2)
        bundle = calibrate(x, w, cfg)
        _, report = quantized_forward(x, w, bundle, cfg)
        results[name] = report
    return results


def save_bundle(bundle: TransformBundle, cfg: PipelineConfig, out_dir: str) -> None:
    """Write the bundle as NPY files plus a JSON manifest.

    The permutation is stored both as integers in the manifest and as an
    index vector in permutation.npy (float64, the package's only NPY dtype).
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "alpha": cfg.alpha,
        "block_size": bundle.block_size,
        "seed": cfg.rotation_spec.seed,
        "steps": cfg.rotation_spec.steps,
        "perm_mode": cfg.perm_mode,
        "flags": {
            "smooth": bundle.smoothing is not None,
            "r1": bundle.r1 is not None,
            "perm": bundle.perm is not None,
            "r2": bundle.r2 is not None,
        },
        "permutation": None if bundle.perm is None else [int(i) for i in bundle.perm.order],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    if bundle.smoothing is not None:
        write_npy(os.path.join(out_dir, "smoothing_scales.npy"), bundle.smoothing.scales[None, :])
    if bundle.r1 is not None:
        write_npy(os.path.join(out_dir, "rotation1_block.npy"), bundle.r1.shared_block.m)
    if bundle.perm is not None:
        write_npy(
            os.path.join(out_dir, "permutation.npy"),
            bundle.perm.order.astype(np.float64)[None, :],
        )
    if bundle.r2 is not None:
        write_npy(os.path.join(out_dir, "rotation2_block.npy"), bundle.r2.shared_block.m)
