"""Shape-checked dense float64 arithmetic.

Matrices are 2-D ``numpy.ndarray`` objects of dtype float64, vectors are 1-D.
Mini-batches follow the batch-rows convention: a batch of ``n`` inputs of
dimension ``D`` is an ``(n, D)`` matrix, so a layer computes ``x @ W.T + c``
where the math is usually written with column vectors as ``W v + c``.

The only implicit broadcast is :func:`add_row_broadcast`. Every other shape
mismatch raises :class:`ShapeError`.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "as_matrix",
    "as_vector",
    "zeros",
    "identity",
    "matmul",
    "matmul_transpose_a",
    "matmul_transpose_b",
    "add_row_broadcast",
    "map_elementwise",
    "scale",
    "add",
    "hadamard",
    "row_sums",
    "col_sums",
]


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(data) -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    return m


def as_vector(data) -> np.ndarray:
    v = np.array(data, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    return v


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols), dtype=np.float64)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def _check_2d(name: str, m: np.ndarray) -> None:
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_transpose_a(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a.T @ b``; the transpose is a strided view, never a copy."""
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul_transpose_a: cannot multiply {a.shape}^T by {b.shape}")
    return a.T @ b


def matmul_transpose_b(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b.T``; the transpose is a strided view, never a copy."""
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"matmul_transpose_b: cannot multiply {a.shape} by {b.shape}^T")
    return a @ b.T


def add_row_broadcast(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Add ``v`` to every row of ``m`` (rows are examples, columns are units)."""
    _check_2d("m", m)
    if v.ndim != 1 or v.shape[0] != m.shape[1]:
        raise ShapeError(f"add_row_broadcast: vector {v.shape} does not fit rows of {m.shape}")
    return m + v


def map_elementwise(m: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a vectorised scalar function; the result never aliases ``m``."""
    out = np.asarray(f(m), dtype=np.float64)
    if out.shape != m.shape:
        raise ShapeError(f"map_elementwise: function changed shape {m.shape} -> {out.shape}")
    if np.shares_memory(out, m):
        out = out.copy()
    return out


def scale(m: np.ndarray, s: float) -> np.ndarray:
    return m * float(s)


def _same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape("add", a, b)
    return a + b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape("hadamard", a, b)
    return a * b


def row_sums(m: np.ndarray) -> np.ndarray:
    _check_2d("m", m)
    return m.sum(axis=1)


def col_sums(m: np.ndarray) -> np.ndarray:
    _check_2d("m", m)
    return m.sum(axis=0)
