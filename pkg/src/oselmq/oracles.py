"""Slow, independent reference computations.

Nothing here calls into the optimized paths it is used to check: loops are
scalar Python, least squares is solved in exact rational arithmetic, and
eigenvalues come from a cyclic Jacobi sweep.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def naive_matmul(a, b) -> list[list[float]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return out


def transpose(a) -> list[list[float]]:
    return [list(col) for col in zip(*a)]


def jacobi_eigenvalues(sym, tol: float = 1e-14, max_sweeps: int = 100) -> list[float]:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = [list(map(float, row)) for row in sym]
    n = len(a)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        scale = math.sqrt(sum(a[i][i] ** 2 for i in range(n))) or 1.0
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p][q] == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
    return sorted(a[i][i] for i in range(n))


def jacobi_sigma_max(a) -> float:
    a = [list(map(float, row)) for row in a]
    # A^T A and A A^T share their nonzero spectrum; diagonalize the smaller one
    if len(a) < len(a[0]):
        a = transpose(a)
    ata = naive_matmul(transpose(a), a)
    return math.sqrt(max(jacobi_eigenvalues(ata)[-1], 0.0))


def sampled_sigma_max(a: np.ndarray, n_vectors: int, rng: np.random.Generator,
                      chunk: int = 100_000) -> float:
    """max ||A v|| over random unit vectors (a lower bound that tightens with samples)."""
    best = 0.0
    left = n_vectors
    while left > 0:
        k = min(chunk, left)
        v = rng.normal(size=(a.shape[1], k))
        v /= np.linalg.norm(v, axis=0)
        best = max(best, float(np.max(np.linalg.norm(a @ v, axis=0))))
        left -= k
    return best


def exact_solve(a: list[list[Fraction]], b: list[list[Fraction]]) -> list[list[Fraction]]:
    """Solve ``a x = b`` exactly by Gaussian elimination over the rationals."""
    n = len(a)
    m = len(b[0])
    aug = [list(a[i]) + list(b[i]) for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [row[n:n + m] for row in aug]


def exact_ridge(h: np.ndarray, t: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """(H^T H + delta I)^-1 H^T t computed exactly from the float inputs."""
    hf = [[Fraction(float(v)) for v in row] for row in h]
    tf = [[Fraction(float(v)) for v in row] for row in t]
    k, n = len(hf), len(hf[0])
    d = Fraction(float(delta))
    hth = [[sum(hf[r][i] * hf[r][j] for r in range(k)) + (d if i == j else 0) for j in range(n)]
           for i in range(n)]
    htt = [[sum(hf[r][i] * tf[r][j] for r in range(k)) for j in range(len(tf[0]))]
           for i in range(n)]
    sol = exact_solve(hth, htt)
    return np.array([[float(v) for v in row] for row in sol])


def scalar_hidden(x, alpha, bias) -> list[list[float]]:
    """ReLU(x alpha + b) one entry at a time."""
    out = []
    for row in x:
        hrow = []
        for j in range(len(alpha[0])):
            acc = bias[0][j]
            for i, xi in enumerate(row):
                acc += xi * alpha[i][j]
            hrow.append(acc if acc > 0.0 else 0.0)
        out.append(hrow)
    return out


def scalar_mlp(x, w1, b1, w2, b2) -> list[list[float]]:
    h = scalar_hidden(x, w1, b1)
    out = []
    for hrow in h:
        out.append([b2[0][j] + sum(hrow[i] * w2[i][j] for i in range(len(hrow)))
                    for j in range(len(w2[0]))])
    return out


def central_difference(f, params: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Numerical gradient of scalar ``f()`` w.r.t. each array in ``params`` (mutated and restored)."""
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            fp = f()
            arr[idx] = old - h
            fm = f()
            arr[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def cartpole_euler_step(x, x_dot, theta, theta_dot, force):
    """Scalar re-derivation of one cart-pole step (masses 1.0/0.1, l=0.5, g=9.8, tau=0.02)."""
    g, mc, mp, l, tau = 9.8, 1.0, 0.1, 0.5, 0.02
    total = mc + mp
    # pole angular acceleration from the Lagrangian equations (Florian 2007, frictionless)
    num = g * math.sin(theta) + math.cos(theta) * (
        (-force - mp * l * theta_dot ** 2 * math.sin(theta)) / total
    )
    den = l * (4.0 / 3.0 - mp * math.cos(theta) ** 2 / total)
    th_acc = num / den
    x_acc = (force + mp * l * (theta_dot ** 2 * math.sin(theta) - th_acc * math.cos(theta))) / total
    return (x + tau * x_dot, x_dot + tau * x_acc, theta + tau * theta_dot, theta_dot + tau * th_acc)
