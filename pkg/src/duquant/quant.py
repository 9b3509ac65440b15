"""Uniform asymmetric b-bit quantization with per-token or per-channel groups.

A group is one activation row (Axis.ROWS, per-token) or one weight output
column (Axis.COLS, per-channel). Each group gets its own step size and zero
point from its clipped min/max range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Axis, as_matrix

__all__ = [
    "QuantConfig",
    "QuantizedTensor",
    "ClipParams",
    "quantize",
    "dequantize",
    "quant_error",
    "search_clip",
]


@dataclass(frozen=True)
class QuantConfig:
    bits: int
    clip_ratio: float = 1.0
    axis: Axis = Axis.ROWS

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in [2, 8], got {self.bits}")
        if not 0.0 < self.clip_ratio <= 1.0:
            raise ValueError(f"clip_ratio must be in (0, 1], got {self.clip_ratio}")
        if not isinstance(self.axis, Axis):
            raise ValueError(f"axis must be an Axis, got {self.axis!r}")


@dataclass(eq=False)
class QuantizedTensor:
    """Integer codes plus per-group step sizes and zero points.

    deltas == 0 marks a degenerate constant group: its codes are all zero and
    consts holds the exact group value reproduced by dequantize.
    """

    codes: np.ndarray  # uint8, same shape as the source
    deltas: np.ndarray  # float64, one per group
    zeros: np.ndarray  # float64 holding integral zero points, one per group
    bits: int
    axis: Axis
    consts: np.ndarray  # float64, group value where deltas == 0, else 0.0


@dataclass(frozen=True)
class ClipParams:
    gamma: float  # scales the group maximum
    beta: float  # scales the group minimum

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.beta <= 1.0:
            raise ValueError("clip parameters must lie in [0, 1]")


def _quantize_rows(x, lo, hi, bits, sentinel_values):
    """Quantize each row of x against [lo, hi] per row; collapsed ranges get
    the delta == 0 sentinel and reconstruct to sentinel_values."""
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    levels = (1 << bits) - 1
    span = hi - lo
    sentinel = span == 0.0
    deltas = np.where(sentinel, 0.0, span / levels)
    safe = np.where(sentinel, 1.0, deltas)
    zeros = np.where(sentinel, 0.0, -np.round(lo / safe))
    q = np.round(x / safe[:, None]) + zeros[:, None]
    codes = np.clip(q, 0, levels)
    codes[sentinel] = 0
    consts = np.where(sentinel, sentinel_values, 0.0)
    return codes.astype(np.uint8), deltas, zeros, consts


def quantize(x, cfg: QuantConfig) -> QuantizedTensor:
    """Map x to integer codes: clamp(round(v / delta) + z, 0, 2^b - 1).

    Per group, hi = clip_ratio * max and lo = clip_ratio * min define the
    range, delta = (hi - lo) / (2^b - 1), and z = -round(lo / delta).
    Rounding is round-half-to-even throughout.
    """
    x = as_matrix(x, "x")
    if not np.isfinite(x).all():
        raise ValueError("cannot quantize non-finite input")
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise ValueError("cannot quantize an empty matrix")
    work = x if cfg.axis is Axis.ROWS else x.T
    mn = work.min(axis=1)
    mx = work.max(axis=1)
    codes, deltas, zeros, consts = _quantize_rows(
        work, cfg.clip_ratio * mn, cfg.clip_ratio * mx, cfg.bits, sentinel_values=mx
    )
    if cfg.axis is Axis.COLS:
        codes = np.ascontiguousarray(codes.T)
    return QuantizedTensor(
        codes=codes, deltas=deltas, zeros=zeros, bits=cfg.bits, axis=cfg.axis, consts=consts
    )


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Reconstruct values as (code - z) * delta; sentinel groups yield their constant."""
    codes = q.codes if q.axis is Axis.ROWS else q.codes.T
    out = (codes.astype(np.float64) - q.zeros[:, None]) * q.deltas[:, None]
    sentinel = q.deltas == 0.0
    if sentinel.any():
        out[sentinel] = q.consts[sentinel, None]
    if q.axis is Axis.COLS:
        out = np.ascontiguousarray(out.T)
    return out


def quant_error(x, cfg: QuantConfig) -> dict:
    """Error metrics between x and its quantize/dequantize round trip."""
    x = as_matrix(x, "x")
    diff = x - dequantize(quantize(x, cfg))
    num = float(np.linalg.norm(diff))
    den = float(np.linalg.norm(x))
    if num == 0.0:
        rel = 0.0
    elif den == 0.0:
        rel = float("inf")
    else:
        rel = num / den
    return {
        "mse": float(np.mean(diff * diff)),
        "relative_frobenius": rel,
        "max_abs": float(np.max(np.abs(diff))),
    }


def _grid_mse(work, mn, mx, gamma, beta, bits):
    hi = gamma * mx
    lo = beta * mn
    sentinel_values = np.where(mn == mx, mx, np.maximum(lo, hi))
    codes, deltas, zeros, consts = _quantize_rows(work, lo, hi, bits, sentinel_values)
    q = QuantizedTensor(codes, deltas, zeros, bits, Axis.ROWS, consts)
    diff = work - dequantize(q)
    return float(np.mean(diff * diff))


def search_clip(w, bits: int, axis: Axis, grid_steps: int) -> ClipParams:
    """Grid search for the (gamma, beta) range scalers minimizing round-trip MSE.

    The step size becomes (gamma * max - beta * min) / (2^b - 1) per group.
    Both parameters range over a uniform grid on [0, 1]; ties go to the
    larger gamma, then the larger beta.
    """
    if grid_steps < 2:
        raise ValueError(f"grid_steps must be >= 2, got {grid_steps}")
    w = as_matrix(w, "w")
    if not np.isfinite(w).all():
        raise ValueError("cannot search clip parameters on non-finite input")
    work = w if axis is Axis.ROWS else np.ascontiguousarray(w.T)
    mn = work.min(axis=1)
    mx = work.max(axis=1)
    grid = np.linspace(0.0, 1.0, grid_steps)
    best = None
    best_mse = np.inf
    # descending iteration makes the first strict minimum the largest-(gamma, beta) tie winner
    for gamma in grid[::-1]:
        for beta in grid[::-1]:
            mse = _grid_mse(work, mn, mx, gamma, beta, bits)
            if mse < best_mse:
                best_mse = mse
                best = (float(gamma), float(beta))
    return ClipParams(gamma=best[0], beta=best[1])
