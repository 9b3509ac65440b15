"""Zigzag channel permutation balancing per-block outlier magnitudes.

Channels sorted by magnitude are dealt to blocks in a serpentine pattern,
so no block accumulates only the largest or only the smallest channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Axis, ShapeError, as_matrix

__all__ = [
    "Permutation",
    "zigzag_permutation",
    "block_variance",
    "zigzag_mean_bound",
    "apply_permutation",
    "random_permutation",
]


@dataclass(frozen=True, eq=False)
class Permutation:
    """Channel reordering: order[p] is the original index placed at position p."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        object.__setattr__(self, "order", order)
        if order.ndim != 1 or order.shape[0] < 1:
            raise ValueError("order must be a non-empty 1-D index vector")
        if not np.array_equal(np.sort(order), np.arange(order.shape[0])):
            raise ValueError("order is not a bijection on [0, len)")

    def __len__(self) -> int:
        return int(self.order.shape[0])

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.order.shape[0])
        return inv

    @staticmethod
    def identity(length: int) -> "Permutation":
        return Permutation(order=np.arange(length, dtype=np.int64))


def _check_profile(o, block_size: int) -> np.ndarray:
    o = np.asarray(o, dtype=np.float64).ravel()
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    if o.shape[0] % block_size != 0:
        raise ShapeError(f"profile length {o.shape[0]} not divisible by block_size {block_size}")
    return o


def zigzag_permutation(o, block_size: int) -> Permutation:
    """Serpentine deal of magnitude-sorted channels into blocks.

    Channels are sorted by o descending (ties keep the smaller original
    index first) and dealt one per block per round, left to right on even
    rounds and right to left on odd rounds. The returned order lists, block
    by block, the original channel indices assigned to it.
    """
    o = _check_profile(o, block_size)
    if (o < 0).any():
        raise ValueError("profile entries must be non-negative")
    num_blocks = o.shape[0] // block_size
    ranked = np.argsort(-o, kind="stable")
    rounds = ranked.reshape(block_size, num_blocks).copy()
    rounds[1::2] = rounds[1::2, ::-1]
    return Permutation(order=rounds.T.reshape(-1))


def block_variance(o, perm: Permutation, block_size: int) -> float:
    """Population variance of per-block means of the permuted magnitude profile."""
    o = _check_profile(o, block_size)
    if o.shape[0] != len(perm):
        raise ShapeError(f"profile length {o.shape[0]} != permutation length {len(perm)}")
    means = o[perm.order].reshape(-1, block_size).mean(axis=1)
    return float(means.var())


def zigzag_mean_bound(o_sorted_desc, block_size: int, num_blocks: int) -> float:
    """Upper bound on every zigzag block mean for a descending profile.

    With delta the largest adjacent gap, the bound is
    o[0] + (block_size * K - 1) * (block_size / 2 - 1) / block_size * delta.
    """
    o = np.asarray(o_sorted_desc, dtype=np.float64).ravel()
    if not _is_power_of_two(block_size):
        raise ValueError(f"block_size must be a power of two, got {block_size}")
    if o.shape[0] != block_size * num_blocks:
        raise ShapeError(
            f"profile length {o.shape[0]} != block_size {block_size} * num_blocks {num_blocks}"
        )
    diffs = np.diff(o)
    if (diffs > 0).any():
        raise ValueError("profile must be sorted in descending order")
    delta = float(np.max(-diffs)) if diffs.size else 0.0
    factor = (block_size * num_blocks - 1) * (block_size // 2 - 1) / block_size
    return float(o[0] + factor * delta)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def apply_permutation(x, perm: Permutation, inverse: bool = False, axis: Axis = Axis.COLS) -> np.ndarray:
    """Reorder columns (activations) or rows (weights) of x.

    Column mode applies x @ P, row mode P^T @ x; with inverse=True the
    transpose acts instead, so apply followed by inverse-apply restores the
    input bit-exactly.
    """
    x = as_matrix(x, "x")
    order = perm.inverse() if inverse else perm.order
    if axis is Axis.COLS:
        if x.shape[1] != len(perm):
            raise ShapeError(f"x has {x.shape[1]} cols, permutation length {len(perm)}")
        return x[:, order]
    if x.shape[0] != len(perm):
        raise ShapeError(f"x has {x.shape[0]} rows, permutation length {len(perm)}")
    return x[order, :]


def random_permutation(length: int, rng: np.random.Generator) -> Permutation:
    """Seeded uniform shuffle baseline."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return Permutation(order=rng.permutation(length).astype(np.int64))
