"""32-bit Q20 fixed-point emulation of the predict / sequential-train datapath.

A Q20 value is a signed 32-bit integer ``raw`` standing for ``raw / 2**20``
(1 sign bit, 11 integer bits, 20 fraction bits). Values are carried as
``int64`` numpy arrays of raw words; all datapath arithmetic is integer.

Rounding: multiplication rounds to nearest (ties toward +inf) by adding
``2**19`` before the arithmetic shift; division truncates toward zero.
Every result saturates to the representable range and each saturation is
counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .oselm import OselmState

FRAC_BITS = 20
ONE = 1 << FRAC_BITS
HALF_ULP = 1 << (FRAC_BITS - 1)
RAW_MIN = -(1 << 31)
RAW_MAX = (1 << 31) - 1
RESOLUTION = 2.0 ** -FRAC_BITS
REAL_MIN = RAW_MIN * RESOLUTION
REAL_MAX = RAW_MAX * RESOLUTION


@dataclass
class OverflowCounter:
    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)


_SCRATCH = OverflowCounter()


def _raw(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype.kind not in "iu":
        raise TypeError(f"Q20 datapath takes raw integer words, got dtype {arr.dtype}")
    return arr.astype(np.int64, copy=False)


def _saturate(v: np.ndarray, counter: OverflowCounter) -> np.ndarray:
    over = (v > RAW_MAX) | (v < RAW_MIN)
    if over.any():
        counter.add(np.count_nonzero(over))
        v = np.clip(v, RAW_MIN, RAW_MAX)
    return v


def fx_convert(v, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    """Real -> raw Q20, round half to even, saturating."""
    scaled = np.rint(np.asarray(v, dtype=np.float64) * ONE)
    over = (scaled > RAW_MAX) | (scaled < RAW_MIN)
    if np.any(over):
        counter.add(np.count_nonzero(over))
        scaled = np.clip(scaled, RAW_MIN, RAW_MAX)
    return scaled.astype(np.int64)


def fx_to_real(f) -> np.ndarray | float:
    out = _raw(f) * RESOLUTION
    return float(out) if np.ndim(out) == 0 else out


def fx_add(a, b, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    return _saturate(_raw(a) + _raw(b), counter)


def fx_sub(a, b, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    return _saturate(_raw(a) - _raw(b), counter)


def fx_mul(a, b, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    # |a*b| < 2**62 so the int64 intermediate is exact
    prod = _raw(a) * _raw(b)
    return _saturate((prod + HALF_ULP) >> FRAC_BITS, counter)


def fx_div(a, b, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    a = _raw(a)
    b = _raw(b)
    if np.any(b == 0):
        raise ZeroDivisionError("Q20 division by zero")
    num = a << FRAC_BITS
    q = np.abs(num) // np.abs(b)
    q = np.where((num < 0) ^ (b < 0), -q, q)
    return _saturate(q, counter)


def _accumulate(products: np.ndarray, counter: OverflowCounter) -> np.ndarray:
    """Sum along the last axis with one saturating accumulator per output.

    The int64 running sum equals the saturating one unless some partial sum
    leaves the Q20 range; only those lanes are replayed step by step.
    """
    partial = np.cumsum(products, axis=-1)
    out = partial[..., -1].copy()
    bad = np.any((partial > RAW_MAX) | (partial < RAW_MIN), axis=-1)
    if np.any(bad):
        for idx in zip(*np.nonzero(bad)):
            acc = 0
            for p in products[idx]:
                acc += int(p)
                if acc > RAW_MAX:
                    acc = RAW_MAX
                    counter.add(1)
                elif acc < RAW_MIN:
                    acc = RAW_MIN
                    counter.add(1)
            out[idx] = acc
    return out


def fx_matmul(a, b, counter: OverflowCounter = _SCRATCH) -> np.ndarray:
    a = _raw(a)
    b = _raw(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    # products[i, j, k] = a[i, k] * b[k, j], each rounded by the multiplier
    products = fx_mul(a[:, None, :], b.T[None, :, :], counter)
    return _accumulate(products, counter)


def fx_relu(a) -> np.ndarray:
    return np.maximum(_raw(a), 0)


@dataclass
class FixedOselmState:
    """On-chip memory image: shared alpha and bias, two beta banks, one P."""

    alpha: np.ndarray
    bias: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    p: np.ndarray
    overflow: OverflowCounter = field(default_factory=OverflowCounter)

    @classmethod
    def from_float(cls, online: OselmState, target: OselmState | None = None) -> "FixedOselmState":
        """Load a host-trained state; the target bank defaults to the online beta."""
        counter = OverflowCounter()
        prm = online.params
        beta2 = (target or online).params.beta
        return cls(
            alpha=fx_convert(prm.alpha, counter),
            bias=fx_convert(prm.bias, counter),
            beta1=fx_convert(prm.beta, counter),
            beta2=fx_convert(beta2, counter),
            p=fx_convert(online.p, counter),
            overflow=counter,
        )

    @property
    def n_tilde(self) -> int:
        return self.alpha.shape[1]

    def beta(self, bank: int) -> np.ndarray:
        if bank == 1:
            return self.beta1
        if bank == 2:
            return self.beta2
        raise ValueError(f"beta bank must be 1 or 2, got {bank}")

    def sync_target(self) -> None:
        self.beta2 = self.beta1.copy()

    def hex_dump(self) -> str:
        words = [self.alpha, self.bias, self.beta1, self.beta2, self.p]
        flat = np.concatenate([w.ravel() for w in words])
        return "".join(f"{int(v) & 0xFFFFFFFF:08x}\n" for v in flat)

    def write_hex(self, path: str | Path) -> None:
        Path(path).write_text(self.hex_dump(), encoding="ascii")


def fx_hidden(state: FixedOselmState, x) -> np.ndarray:
    x = _raw(x)
    acc = fx_matmul(x, state.alpha, state.overflow)
    return fx_relu(fx_add(acc, state.bias, state.overflow))


def fx_predict(state: FixedOselmState, x, bank: int = 1) -> np.ndarray:
    """Q-values (raw, shape k x m) for raw inputs ``x`` (k x n)."""
    h = fx_hidden(state, x)
    return fx_matmul(h, state.beta(bank), state.overflow)


def fx_seq_train(state: FixedOselmState, x, t) -> FixedOselmState:
    """Rank-one update of bank 1 and P on one raw sample.

    Uses ``u = P h^T`` on both sides of the outer product so P stays
    bit-symmetric; the scalar ``1 / (1 + h u)`` comes from the divider.
    """
    c = state.overflow
    x = _raw(x)
    t = _raw(t).reshape(1, -1)
    h = fx_hidden(state, x)  # 1 x N
    u = fx_matmul(state.p, h.T, c)  # N x 1
    s = fx_add(ONE, fx_matmul(h, u, c), c)
    recip = fx_div(ONE, s, c)
    outer = fx_mul(fx_mul(u, u.T, c), recip, c)
    p = fx_sub(state.p, outer, c)
    err = fx_sub(t, fx_matmul(h, state.beta1, c), c)  # 1 x m
    gain = fx_matmul(p, h.T, c)  # N x 1
    beta1 = fx_add(state.beta1, fx_mul(gain, err, c), c)
    return FixedOselmState(state.alpha, state.bias, beta1, state.beta2, p, c)
