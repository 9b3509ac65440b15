"""Calibration statistics and synthetic activations with controllable outliers.

Normal outlier channels carry large magnitudes across every token; massive
outliers are single entries of extreme magnitude confined to a few
(token, channel) positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, as_matrix, col_absmax

__all__ = [
    "OutlierProfile",
    "SynthSpec",
    "aggregate_profile",
    "synth_activations",
    "classify_outliers",
]

MASSIVE_ABS_THRESHOLD = 100.0
MASSIVE_MEDIAN_RATIO = 1000.0
NORMAL_CHANNEL_FACTOR = 5.0  # no principled value exists; recorded as tunable


@dataclass(frozen=True, eq=False)
class OutlierProfile:
    col_absmax: np.ndarray
    num_samples: int

    def as_matrix(self) -> np.ndarray:
        """The profile broadcast as a single-row matrix, usable wherever a
        concrete activation sample is expected."""
        return self.col_absmax[None, :].copy()


@dataclass(frozen=True)
class SynthSpec:
    rows: int
    cols: int
    base_scale: float = 0.02
    normal_channels: tuple = field(default_factory=tuple)
    normal_magnitude: float = 5.0
    massive_count: int = 0
    massive_magnitude: float = 1400.0
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if self.base_scale <= 0 or self.normal_magnitude <= 0 or self.massive_magnitude <= 0:
            raise ValueError("scales and magnitudes must be positive")
        if any(not 0 <= j < self.cols for j in self.normal_channels):
            raise ValueError("normal_channels indices out of range")
        if not 0 <= self.massive_count <= self.rows * self.cols:
            raise ValueError("massive_count out of range")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def aggregate_profile(samples) -> OutlierProfile:
    """Mean over samples of each sample's per-channel max-absolute values."""
    if not samples:
        raise ValueError("need at least one calibration sample")
    mats = [as_matrix(s, f"samples[{i}]") for i, s in enumerate(samples)]
    cols = mats[0].shape[1]
    for i, m in enumerate(mats):
        if m.shape[1] != cols:
            raise ShapeError(f"samples[{i}] has {m.shape[1]} cols, expected {cols}")
    stacked = np.stack([col_absmax(m) for m in mats])
    return OutlierProfile(col_absmax=stacked.mean(axis=0), num_samples=len(mats))


def synth_activations(spec: SynthSpec) -> np.ndarray:
    """Gaussian base with injected normal-outlier channels and massive entries.

    Normal channels are scaled so their column max-abs equals
    normal_magnitude; massive entries are set to +-massive_magnitude at
    seeded positions. Deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.normal(0.0, spec.base_scale, size=(spec.rows, spec.cols))
    for j in spec.normal_channels:
        peak = np.max(np.abs(x[:, j]))
        if peak > 0:
            x[:, j] *= spec.normal_magnitude / peak
    if spec.massive_count:
        flat = rng.choice(spec.rows * spec.cols, size=spec.massive_count, replace=False)
        signs = rng.choice([-1.0, 1.0], size=spec.massive_count)
        x.flat[flat] = signs * spec.massive_magnitude
    return x


def classify_outliers(
    x,
    massive_abs: float = MASSIVE_ABS_THRESHOLD,
    massive_ratio: float = MASSIVE_MEDIAN_RATIO,
    normal_factor: float = NORMAL_CHANNEL_FACTOR,
) -> dict:
    """Split outliers into massive (token, channel) positions and normal channels.

    Massive entries exceed both an absolute threshold and a multiple of the
    median absolute activation. Normal channels are judged on column max-abs
    with massive positions masked out, so one extreme entry does not make its
    channel look persistent.
    """
    x = as_matrix(x, "x")
    absx = np.abs(x)
    med = float(np.median(absx))
    massive_mask = (absx > massive_abs) & (absx > massive_ratio * med)
    massive_positions = [(int(i), int(j)) for i, j in zip(*np.nonzero(massive_mask))]
    masked = np.where(massive_mask, 0.0, absx)
    col_max = masked.max(axis=0)
    med_col = float(np.median(col_max))
    normal_channels = [int(j) for j in np.nonzero(col_max > normal_factor * med_col)[0]]
    return {"normal_channels": normal_channels, "massive_positions": massive_positions}
