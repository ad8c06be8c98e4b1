"""Batch extreme learning machine: single hidden ReLU layer, closed-form output weights."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeError
from .matrix import Matrix, identity, inverse, matmul, sigma_max


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


# Fixed on purpose: the Lipschitz argument relies on a 1-Lipschitz activation.
ACTIVATION = relu


@dataclass(frozen=True)
class NetworkShape:
    n: int
    n_tilde: int
    m: int

    def __post_init__(self):
        if min(self.n, self.n_tilde, self.m) < 1:
            raise ValueError(f"all layer sizes must be >= 1, got {self}")


@dataclass(frozen=True)
class ElmParams:
    shape: NetworkShape
    alpha: Matrix  # n x n_tilde
    bias: Matrix  # 1 x n_tilde
    beta: Matrix  # n_tilde x m

    def __post_init__(self):
        s = self.shape
        expected = {
            "alpha": (s.n, s.n_tilde),
            "bias": (1, s.n_tilde),
            "beta": (s.n_tilde, s.m),
        }
        for name, dims in expected.items():
            got = getattr(self, name).shape
            if got != dims:
                raise ShapeError(f"{name} has shape {got}, expected {dims}")

    def with_beta(self, beta: Matrix) -> "ElmParams":
        return replace(self, beta=beta)


def elm_init(shape: NetworkShape, rng: np.random.Generator, normalize_alpha: bool = False,
             weight_range: tuple[float, float] = (0.0, 1.0), normalize_bias: bool = False) -> ElmParams:
    """Draw random parameters.

    alpha and bias are uniform on ``weight_range``; beta is uniform on [0, 1].
    With ``normalize_alpha`` the input weights are divided by their largest
    singular value so the input layer is 1-Lipschitz; ``normalize_bias``
    divides the bias by the same factor.
    """
    lo, hi = weight_range
    alpha = rng.uniform(lo, hi, (shape.n, shape.n_tilde))
    bias = rng.uniform(lo, hi, (1, shape.n_tilde))
    beta = rng.uniform(0.0, 1.0, (shape.n_tilde, shape.m))
    if normalize_alpha:
        s = sigma_max(alpha)
        alpha = alpha / s
        if normalize_bias:
            bias = bias / s
    return ElmParams(shape, alpha, bias, beta)


def hidden(params: ElmParams, x: Matrix) -> Matrix:
    if x.ndim != 2 or x.shape[1] != params.shape.n:
        raise ShapeError(f"input has shape {x.shape}, network expects {params.shape.n} columns")
    return ACTIVATION(matmul(x, params.alpha) + params.bias)


def elm_predict(params: ElmParams, x: Matrix) -> Matrix:
    return matmul(hidden(params, x), params.beta)


def ridge_solve(h: Matrix, t: Matrix, delta: float) -> tuple[Matrix, Matrix]:
    """Return ``(P, beta)`` with ``P = (H^T H + delta I)^-1`` and ``beta = P H^T t``."""
    if h.shape[0] != t.shape[0]:
        raise ShapeError(f"H has {h.shape[0]} rows but t has {t.shape[0]}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    p = inverse(h.T @ h + delta * identity(h.shape[1]))
    return p, p @ (h.T @ t)


def elm_fit(params: ElmParams, x: Matrix, t: Matrix, delta: float = 0.0) -> ElmParams:
    """Solve the output weights in one shot on the batch ``(x, t)``."""
    if t.ndim != 2 or t.shape[1] != params.shape.m:
        raise ShapeError(f"target has shape {t.shape}, network has {params.shape.m} outputs")
    _, beta = ridge_solve(hidden(params, x), t, delta)
    return params.with_beta(beta)
