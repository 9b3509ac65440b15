"""Per-channel smoothing that migrates quantization difficulty from activations to weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_matrix

__all__ = ["SmoothingScale", "compute_smoothing", "apply_smoothing", "EPS"]

EPS = 1e-5  # floor on channel statistics so dead channels do not divide by zero


@dataclass(frozen=True, eq=False)
class SmoothingScale:
    scales: np.ndarray  # positive, one per shared inner channel
    alpha: float


def compute_smoothing(x_absmax, w_absmax, alpha: float) -> SmoothingScale:
    """Per-channel scale max(|X_j|)^alpha / max(|W_j|)^(1-alpha).

    alpha is the migration strength: 0 leaves activations alone, 1 normalizes
    every activation channel to unit max.
    """
    x_absmax = np.asarray(x_absmax, dtype=np.float64).ravel()
    w_absmax = np.asarray(w_absmax, dtype=np.float64).ravel()
    if x_absmax.shape != w_absmax.shape:
        raise ShapeError(
            f"statistic lengths differ: {x_absmax.shape[0]} vs {w_absmax.shape[0]}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if (x_absmax < 0).any() or (w_absmax < 0).any():
        raise ValueError("channel statistics must be non-negative")
    scales = np.maximum(x_absmax, EPS) ** alpha / np.maximum(w_absmax, EPS) ** (1.0 - alpha)
    return SmoothingScale(scales=scales, alpha=float(alpha))


def apply_smoothing(x, w, s: SmoothingScale):
    """Divide activation columns and multiply weight rows by the scales.

    The product x' @ w' equals x @ w in exact arithmetic, but activation
    outlier channels shrink while the matching weight rows grow.
    """
    x = as_matrix(x, "x")
    w = as_matrix(w, "w")
    c = s.scales.shape[0]
    if x.shape[1] != c or w.shape[0] != c:
        raise ShapeError(
            f"smoothing length {c} does not match x cols {x.shape[1]} / w rows {w.shape[0]}"
        )
    return x / s.scales[None, :], w * s.scales[:, None]
