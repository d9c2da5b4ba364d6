"""Small dense linear-algebra helpers.

Matrices are plain ``float64`` numpy arrays. ``matmul`` accumulates over the
inner dimension in index order so its result is bit-identical to a naive
triple loop; the batched training path in :mod:`gnn_tracin.model` uses BLAS
instead and is cross-checked against these reference routines.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are not conformable."""


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1 and rows is not None and cols is not None:
        m = m.reshape(rows, cols)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows or cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected shape ({rows}, {cols}), got {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for j in range(a.shape[1]):
        out += a[:, j : j + 1] * b[j : j + 1, :]
    return out


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


def relu_mask(m: np.ndarray) -> np.ndarray:
    """Derivative of ReLU with the convention ReLU'(0) = 0."""
    return (np.asarray(m) > 0.0).astype(np.float64)


def log_softmax(logits) -> np.ndarray:
    """Log-softmax along the last axis, stabilised by max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def frobenius_norm_sq(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum(m * m))
