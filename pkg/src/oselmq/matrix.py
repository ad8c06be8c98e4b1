"""Small dense linear-algebra kernel.

Matrices are plain 2-D ``float64`` numpy arrays in C (row-major) order. Every
operation here returns a fresh array and never mutates its arguments.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError, SingularMatrixError

Matrix = np.ndarray

PIVOT_EPS = 1e-12
POWER_TOL = 1e-13
POWER_MAX_ITER = 100_000


def as_matrix(values) -> Matrix:
    """Coerce ``values`` to a 2-D float64 array, promoting vectors to a single row."""
    m = np.array(values, dtype=np.float64, order="C", copy=True)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimensions")
    return m


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def inverse(a: Matrix) -> Matrix:
    """Invert a square matrix by Gauss-Jordan elimination with partial pivoting."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"inverse needs a square matrix, got {a.shape}")
    n = a.shape[0]
    aug = np.hstack([np.array(a, dtype=np.float64), np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < PIVOT_EPS:
            raise SingularMatrixError(col, float(aug[piv, col]))
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return np.ascontiguousarray(aug[:, n:])


def sigma_max(a: Matrix) -> float:
    """Largest singular value by power iteration on ``a.T @ a``.

    Stops when the Rayleigh estimate changes by less than ``POWER_TOL``
    relative, or after ``POWER_MAX_ITER`` iterations. A zero matrix gives 0.
    """
    if a.size == 0:
        raise ShapeError("sigma_max of an empty matrix")
    if not np.any(a):
        return 0.0
    # fixed start vector keeps the result deterministic
    v = np.random.default_rng(0x5EED).uniform(0.5, 1.5, a.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_MAX_ITER):
        av = a @ v
        lam_new = float(av @ av)
        w = a.T @ av
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # start vector fell in the null space
            v = np.roll(v, 1) + 1.0
            v /= np.linalg.norm(v)
            continue
        v = w / norm
        if lam_new > 0 and abs(lam_new - lam) <= POWER_TOL * lam_new:
            break
        lam = lam_new
    # Rayleigh quotient of the last iterate
    av = a @ v
    return math.sqrt(float(av @ av))


def frobenius_norm(a: Matrix) -> float:
    return math.sqrt(float(np.sum(np.square(a))))


def clip(lo: float, v: float, hi: float) -> float:
    if lo > hi:
        raise ValueError(f"clip bounds reversed: lo={lo} > hi={hi}")
    return min(max(v, lo), hi)
