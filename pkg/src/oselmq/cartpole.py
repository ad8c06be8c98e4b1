"""CartPole-v0: the classic-control inverted pendulum with a 200-step cap."""

from __future__ import annotations

import csv
import enum
import math
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import StateError

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_LENGTH = 0.5
POLEMASS_LENGTH = MASS_POLE * HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02

X_THRESHOLD = 2.4
THETA_THRESHOLD = 12 * 2 * math.pi / 360
MAX_STEPS = 200

STATE_DIM = 4
N_ACTIONS = 2


class CartPoleState(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float


class DoneReason(str, enum.Enum):
    RUNNING = "running"
    POLE_FELL = "pole_fell"
    CART_OUT = "cart_out"
    STEP_LIMIT = "step_limit"


def dynamics(s: CartPoleState, action: int) -> CartPoleState:
    return euler_step(s, FORCE_MAG if action == 1 else -FORCE_MAG)


def euler_step(s: CartPoleState, force: float) -> CartPoleState:
    """One explicit-Euler step of the cart-pole equations of motion."""
    x, x_dot, theta, theta_dot = s
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    temp = (force + POLEMASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS)
    )
    x_acc = temp - POLEMASS_LENGTH * theta_acc * cos_t / TOTAL_MASS
    return CartPoleState(
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    )


def failure_reason(s: CartPoleState) -> DoneReason:
    if abs(s.theta) > THETA_THRESHOLD:
        return DoneReason.POLE_FELL
    if abs(s.x) > X_THRESHOLD:
        return DoneReason.CART_OUT
    return DoneReason.RUNNING


class CartPole:
    """Stateful episode runner around :func:`dynamics`."""

    def __init__(self, seed: int | None = None, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.state: CartPoleState | None = None
        self.steps = 0
        self.done_reason = DoneReason.RUNNING

    @property
    def done(self) -> bool:
        return self.done_reason is not DoneReason.RUNNING

    def failed(self) -> bool:
        return self.done_reason in (DoneReason.POLE_FELL, DoneReason.CART_OUT)

    def reset(self) -> np.ndarray:
        self.state = CartPoleState(*self.rng.uniform(-0.05, 0.05, STATE_DIM))
        self.steps = 0
        self.done_reason = DoneReason.RUNNING
        return np.array(self.state)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.state is None:
            raise StateError("reset() must be called before step()")
        if self.done:
            raise StateError(f"episode already finished ({self.done_reason.value})")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")
        self.state = dynamics(self.state, action)
        self.steps += 1
        reason = failure_reason(self.state)
        if reason is DoneReason.RUNNING and self.steps >= MAX_STEPS:
            reason = DoneReason.STEP_LIMIT
        self.done_reason = reason
        return np.array(self.state), 1.0, self.done


TRAJECTORY_HEADER = ("step", "x", "x_dot", "theta", "theta_dot", "action", "reward", "done")


def write_trajectory(rows: Iterable[tuple], path: str | Path) -> None:
    """Rows are ``(step, CartPoleState-like, action, reward, done)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for step, state, action, reward, done in rows:
            w.writerow([step, *(repr(float(v)) for v in state), action, reward, int(done)])
