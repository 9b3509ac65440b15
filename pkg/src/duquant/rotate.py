"""Outlier-targeted orthogonal rotations.

The greedy construction repeatedly swaps the worst outlier column into the
first position, spreads it across the block with an orthogonal matrix whose
first row is uniform, and keeps the prefix product with the smallest maximum
absolute value. A shared block is applied block-diagonally over the channel
dimension. A Sylvester Hadamard matrix is provided as the untargeted baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, as_matrix, col_absmax

__all__ = [
    "RotationSpec",
    "BlockRotation",
    "BlockDiagonalRotation",
    "random_orthogonal",
    "uniform_first_row_orthogonal",
    "build_single_rotation",
    "greedy_rotation",
    "assemble_block_diagonal",
    "apply_block_rotation",
    "hadamard",
]

ORTHOGONALITY_TOL = 1e-9
DET_TOL = 1e-6


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RotationSpec:
    block_size: int = 128
    steps: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.block_size < 2 or not _is_power_of_two(self.block_size):
            raise ValueError(f"block_size must be a power of two >= 2, got {self.block_size}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class BlockRotation:
    m: np.ndarray

    def __post_init__(self):
        m = self.m
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"block rotation must be square, got {m.shape}")
        err = np.max(np.abs(m @ m.T - np.eye(m.shape[0])))
        if err > ORTHOGONALITY_TOL:
            raise ValueError(f"block is not orthogonal: max |R R^T - I| = {err:.3e}")
        det_err = abs(abs(float(np.linalg.det(m))) - 1.0)
        if det_err > DET_TOL:
            raise ValueError(f"block determinant is not +-1: off by {det_err:.3e}")

    @property
    def block_size(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True, eq=False)
class BlockDiagonalRotation:
    """One shared orthogonal block repeated along the diagonal."""

    shared_block: BlockRotation
    num_blocks: int

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")

    @property
    def block_size(self) -> int:
        return self.shared_block.block_size

    @property
    def dim(self) -> int:
        return self.block_size * self.num_blocks


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of an iid Gaussian."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


def uniform_first_row_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix whose first row is the uniform vector 1/sqrt(dim).

    Built from the Householder reflection sending e1 to the uniform vector,
    with the remaining rows re-randomized by a seeded Haar rotation.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if dim == 1:
        return np.ones((1, 1))
    u = np.full(dim, dim ** -0.5)
    v = -u.copy()
    v[0] += 1.0  # v = e1 - u, nonzero for dim >= 2
    h = np.eye(dim) - (2.0 / (v @ v)) * np.outer(v, v)
    out = h.copy()
    out[1:, :] = random_orthogonal(dim - 1, rng) @ h[1:, :]
    return out


def _single_step(r_tilde: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """One targeted rotation: swap channel d to the front on both sides of
    diag(1, Q') @ r_tilde with Q' a fresh Haar rotation.

    Q' acts before the uniform-first-row matrix (in row-vector application
    order), so it randomizes the non-outlier channels while the swapped-in
    outlier column is still spread with coefficient exactly 1/sqrt(dim);
    composing them the other way round would re-concentrate the outlier.
    """
    dim = r_tilde.shape[0]
    if dim == 1:
        return np.ones((1, 1))
    r = r_tilde.copy()
    r[1:, :] = random_orthogonal(dim - 1, rng) @ r_tilde[1:, :]
    if d != 0:
        r[:, [0, d]] = r[:, [d, 0]]
        r[[0, d], :] = r[[d, 0], :]
    return r


def build_single_rotation(x_block, rng: np.random.Generator) -> np.ndarray:
    """Single rotation targeting the current worst outlier column of x_block."""
    x = as_matrix(x_block, "x_block")
    d = int(np.argmax(col_absmax(x)))  # ties resolve to the smallest index
    r_tilde = uniform_first_row_orthogonal(x.shape[1], rng)
    return _single_step(r_tilde, d, rng)


def greedy_rotation(x_block, spec: RotationSpec, trace: list | None = None) -> BlockRotation:
    """Greedy chain of outlier-targeted rotations, keeping the best prefix.

    Each step retargets the worst column of the current (already rotated)
    block and multiplies in a fresh single rotation. The returned rotation is
    the prefix product whose rotated block has the smallest maximum absolute
    value; the identity counts as the step-0 candidate, so the result never
    increases the maximum. Deterministic for a fixed (input, seed).

    When given, trace receives the max-abs value before any step and after
    each step.
    """
    x = as_matrix(x_block, "x_block")
    if x.shape[1] != spec.block_size:
        raise ShapeError(f"block has {x.shape[1]} cols, spec wants {spec.block_size}")
    rng = np.random.default_rng(spec.seed)
    dim = spec.block_size
    r_tilde = uniform_first_row_orthogonal(dim, rng)  # shared across steps
    acc = np.eye(dim)
    cur = x
    best = np.eye(dim)
    best_val = float(np.max(np.abs(x))) if x.size else 0.0
    if trace is not None:
        trace.append(best_val)
    for _ in range(spec.steps):
        d = int(np.argmax(col_absmax(cur)))
        step = _single_step(r_tilde, d, rng)
        acc = acc @ step
        cur = cur @ step
        val = float(np.max(np.abs(cur))) if cur.size else 0.0
        if trace is not None:
            trace.append(val)
        if val < best_val:
            best_val = val
            best = acc.copy()
    return BlockRotation(m=best)


def assemble_block_diagonal(x, spec: RotationSpec) -> BlockDiagonalRotation:
    """Greedy rotation of the block holding the global outlier, shared across blocks."""
    x = as_matrix(x, "x")
    cols = x.shape[1]
    if cols % spec.block_size != 0:
        raise ShapeError(
            f"cols {cols} not divisible by block_size {spec.block_size}; refusing to pad"
        )
    num_blocks = cols // spec.block_size
    hot = int(np.argmax(col_absmax(x))) // spec.block_size
    block = x[:, hot * spec.block_size : (hot + 1) * spec.block_size]
    return BlockDiagonalRotation(shared_block=greedy_rotation(block, spec), num_blocks=num_blocks)


def apply_block_rotation(x, r: BlockDiagonalRotation, transpose: bool = False) -> np.ndarray:
    """Multiply each contiguous column block of x by the shared block.

    The full dim x dim matrix is never materialized.
    """
    x = as_matrix(x, "x")
    if x.shape[1] != r.dim:
        raise ShapeError(f"x has {x.shape[1]} cols, rotation covers {r.dim}")
    m = r.shared_block.m.T if transpose else r.shared_block.m
    rows = x.shape[0]
    out = x.reshape(rows, r.num_blocks, r.block_size) @ m
    return out.reshape(rows, r.dim)


def hadamard(dim: int) -> np.ndarray:
    """Sylvester Hadamard matrix scaled to orthogonality: entries +-1/sqrt(dim)."""
    if not _is_power_of_two(dim):
        raise ValueError(f"dim must be a power of two, got {dim}")
    h = np.ones((1, 1))
    while h.shape[0] < dim:
        h = np.block([[h, h], [h, -h]])
    return h / np.sqrt(dim)
