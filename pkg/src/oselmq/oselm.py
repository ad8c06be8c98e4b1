"""Online sequential ELM with batch size fixed to 1.

Initial training solves the (optionally ridge-regularized) normal equations
once; afterwards every sample updates ``beta`` and ``P`` by a rank-one
recursive least-squares step whose only division is a scalar reciprocal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .elm import ElmParams, NetworkShape, elm_predict, hidden, ridge_solve
from .errors import DegenerateUpdateError, ShapeError, StateError
from .matrix import Matrix

DENOM_EPS = 1e-12

MAGIC = b"OSLM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class OselmState:
    params: ElmParams
    p: Matrix
    trained: bool = False

    @classmethod
    def fresh(cls, params: ElmParams) -> "OselmState":
        """Untrained state; P is a placeholder until initial training."""
        return cls(params, np.zeros((params.shape.n_tilde, params.shape.n_tilde)), False)

    @property
    def shape(self) -> NetworkShape:
        return self.params.shape

    @property
    def beta(self) -> Matrix:
        return self.params.beta


def init_train(state: OselmState, x0: Matrix, t0: Matrix, delta: float) -> OselmState:
    if state.trained:
        raise StateError("initial training already done")
    if x0.shape[0] < 1 or x0.shape[0] != t0.shape[0]:
        raise ShapeError(f"initial chunk shapes {x0.shape} and {t0.shape} disagree")
    if t0.shape[1] != state.shape.m:
        raise ShapeError(f"target has {t0.shape[1]} columns, network has {state.shape.m} outputs")
    h0 = hidden(state.params, x0)
    p, beta = ridge_solve(h0, t0, delta)
    p = 0.5 * (p + p.T)
    return OselmState(state.params.with_beta(beta), p, True)


def seq_train(state: OselmState, x: Matrix, t: Matrix) -> OselmState:
    """One recursive least-squares step on a single sample."""
    if not state.trained:
        raise StateError("sequential training before initial training")
    if x.shape[0] != 1 or t.shape != (1, state.shape.m):
        raise ShapeError(f"sequential training takes one row, got x {x.shape}, t {t.shape}")
    h = hidden(state.params, x)
    ph = state.p @ h.T  # n_tilde x 1, equal to (h P)^T since P is symmetric
    s = 1.0 + (h @ ph).item()
    if abs(s) < DENOM_EPS:
        raise DegenerateUpdateError(f"update denominator {s:.3e} is degenerate")
    # u u^T is exactly symmetric, so P stays symmetric without re-averaging
    outer = ph * ph.T
    outer /= s
    p = state.p - outer
    # P_new h^T == P h^T / s
    beta = state.beta + ph * ((t - h @ state.beta) / s)
    return OselmState(state.params.with_beta(beta), p, True)


def predict(state: OselmState, x: Matrix) -> Matrix:
    return elm_predict(state.params, x)


def dumps(state: OselmState) -> bytes:
    s = state.shape
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, s.n, s.n_tilde, s.m)]
    for arr in (state.params.alpha, state.params.bias, state.params.beta, state.p):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(blob: bytes, trained: bool = True) -> OselmState:
    """Rebuild a state from :func:`dumps` output.

    The record carries no training flag; checkpoints are assumed to hold an
    initially-trained network unless ``trained`` says otherwise.
    """
    if len(blob) < _HEADER.size:
        raise ValueError("record too short for header")
    magic, version, n, n_tilde, m = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    dims = [(n, n_tilde), (1, n_tilde), (n_tilde, m), (n_tilde, n_tilde)]
    expected = _HEADER.size + 8 * sum(r * c for r, c in dims)
    if len(blob) != expected:
        raise ValueError(f"record is {len(blob)} bytes, expected {expected}")
    offset = _HEADER.size
    arrays = []
    for r, c in dims:
        arr = np.frombuffer(blob, dtype="<f8", count=r * c, offset=offset).reshape(r, c)
        arrays.append(arr.astype(np.float64))
        offset += 8 * r * c
    alpha, bias, beta, p = arrays
    params = ElmParams(NetworkShape(n, n_tilde, m), alpha, bias, beta)
    return OselmState(params, p, trained)


def save(state: OselmState, path: str | Path) -> None:
    Path(path).write_bytes(dumps(state))


def load(path: str | Path, trained: bool = True) -> OselmState:
    return loads(Path(path).read_bytes(), trained)


def with_params(state: OselmState, params: ElmParams) -> OselmState:
    return replace(state, params=params)
