"""Dense float64 matrices, the shared linear algebra, and strict NPY v1.0 I/O.

Every tensor in this package is a 2-D row-major float64 numpy array.
Activations are (tokens x in_channels), weights (in_channels x out_channels).
"""

from __future__ import annotations

import ast
import enum
import struct

import numpy as np

__all__ = [
    "Axis",
    "ShapeError",
    "NpyFormatError",
    "as_matrix",
    "matmul",
    "transpose",
    "col_absmax",
    "row_absmax",
    "read_npy",
    "write_npy",
]


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class NpyFormatError(ValueError):
    """File is not a little-endian float64, C-order, 2-D NPY v1.0 array."""


class Axis(enum.Enum):
    ROWS = "rows"  # per-token grouping: one group per activation row
    COLS = "cols"  # per-channel grouping: one group per output column


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a contiguous 2-D float64 array, rejecting other ranks."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"inner dimensions differ: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def transpose(a) -> np.ndarray:
    a = as_matrix(a, "a")
    return np.ascontiguousarray(a.T)


def col_absmax(a) -> np.ndarray:
    """Per-column maximum absolute value, as a 1-D vector of length cols."""
    a = as_matrix(a, "a")
    if a.shape[0] == 0:
        return np.zeros(a.shape[1])
    return np.abs(a).max(axis=0)


def row_absmax(a) -> np.ndarray:
    """Per-row maximum absolute value, as a 1-D vector of length rows."""
    a = as_matrix(a, "a")
    if a.shape[1] == 0:
        return np.zeros(a.shape[0])
    return np.abs(a).max(axis=1)


_MAGIC = b"\x93NUMPY"
_VERSION = b"\x01\x00"
_DESCR = "<f8"


def write_npy(path, m) -> None:
    """Write a matrix as an NPY v1.0 file (little-endian float64, C order).

    The round trip through read_npy is bit-exact, including signed zeros.
    """
    a = as_matrix(m, "matrix")
    header = "{'descr': '%s', 'fortran_order': False, 'shape': (%d, %d), }" % (
        _DESCR,
        a.shape[0],
        a.shape[1],
    )
    # pad with spaces so the full preamble is a multiple of 64 bytes, newline-terminated
    base = len(_MAGIC) + len(_VERSION) + 2 + len(header) + 1
    header = header + " " * ((-base) % 64) + "\n"
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(_VERSION)
        f.write(struct.pack("<H", len(header)))
        f.write(header.encode("latin1"))
        f.write(a.tobytes(order="C"))


def read_npy(path) -> np.ndarray:
    """Read an NPY v1.0 file written by write_npy (or numpy, if it meets the contract).

    Only 2-D little-endian float64 arrays in C order are accepted; anything
    else raises NpyFormatError naming the offending header field.
    """
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise NpyFormatError(f"bad magic bytes {magic!r}")
        version = f.read(2)
        if version != _VERSION:
            raise NpyFormatError(f"unsupported version {tuple(version)}, only 1.0 is accepted")
        raw_len = f.read(2)
        if len(raw_len) != 2:
            raise NpyFormatError("truncated header length")
        (header_len,) = struct.unpack("<H", raw_len)
        raw = f.read(header_len)
        if len(raw) != header_len:
            raise NpyFormatError("truncated header")
        try:
            meta = ast.literal_eval(raw.decode("latin1").strip())
        except (ValueError, SyntaxError) as exc:
            raise NpyFormatError(f"unparseable header: {exc}") from exc
        if not isinstance(meta, dict):
            raise NpyFormatError("header is not a dict literal")
        descr = meta.get("descr")
        if descr != _DESCR:
            raise NpyFormatError(f"unsupported descr {descr!r}, only {_DESCR!r} is accepted")
        if meta.get("fortran_order") is not False:
            raise NpyFormatError("fortran_order must be False (C order only)")
        shape = meta.get("shape")
        if (
            not isinstance(shape, tuple)
            or len(shape) != 2
            or not all(isinstance(d, int) and d >= 0 for d in shape)
        ):
            raise NpyFormatError(f"shape must be a 2-D tuple of non-negative ints, got {shape!r}")
        rows, cols = shape
        need = rows * cols * 8
        data = f.read(need)
        if len(data) != need:
            raise NpyFormatError(f"truncated data: expected {need} bytes, got {len(data)}")
        return np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()
