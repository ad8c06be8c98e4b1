"""OS-ELM Q-Network agent.

The network takes ``[state, action_code]`` and returns one scalar Q-value.
Training targets are the clipped one-step bootstrap from a fixed target
network. The first ``n_tilde`` transitions are solved in one shot; after that
each step is trained on with probability ``eps2`` using a batch-size-1 update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from . import fixedq20 as fx
from . import oselm
from .elm import ElmParams, NetworkShape, elm_init
from .errors import ConfigError, ShapeError
from .matrix import Matrix, clip, sigma_max
from .oselm import OselmState
from .timing import OpTimer

# numerical jitter for the unregularized variants; not the L2 penalty
JITTER_DELTA = 1e-8


@dataclass(frozen=True)
class AgentConfig:
    n_tilde: int = 64
    eps1: float = 0.7
    eps2: float = 0.5
    gamma: float = 0.99
    delta: float = 0.5
    update_step: int = 2
    clip_lo: float = -1.0
    clip_hi: float = 1.0
    use_l2: bool = True
    use_lipschitz: bool = True
    action_codes: tuple[float, ...] = (-0.5, 0.5)
    terminal_reward: float | None = None
    store_terminal: bool = False
    seed: int = 0
    # initialization and input conditioning; defaults keep the published network
    weight_range: tuple[float, float] = (0.0, 1.0)
    normalize_bias: bool = False
    state_scale: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_tilde < 1:
            raise ConfigError(f"n_tilde must be >= 1, got {self.n_tilde}")
        for name in ("eps1", "eps2", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.update_step < 1:
            raise ConfigError(f"update_step must be >= 1, got {self.update_step}")
        if self.clip_lo > self.clip_hi:
            raise ConfigError(f"clip range reversed: [{self.clip_lo}, {self.clip_hi}]")
        if not self.action_codes or len(set(self.action_codes)) != len(self.action_codes):
            raise ConfigError(f"action codes must be nonempty and distinct: {self.action_codes}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        lo, hi = self.weight_range
        if not lo < hi:
            raise ConfigError(f"weight range must be increasing: {self.weight_range}")
        if self.state_scale is not None and any(v <= 0 for v in self.state_scale):
            raise ConfigError(f"state scale entries must be positive: {self.state_scale}")

    @property
    def n_actions(self) -> int:
        return len(self.action_codes)

    @property
    def init_delta(self) -> float:
        return self.delta if self.use_l2 else JITTER_DELTA


# Flags (use_l2, use_lipschitz) of the four OS-ELM designs.
VARIANTS = {
    "oselm": (False, False),
    "oselm-l2": (True, False),
    "oselm-lipschitz": (False, True),
    "oselm-l2-lipschitz": (True, True),
}


def variant_config(name: str, **overrides) -> AgentConfig:
    """Config for one of the named OS-ELM designs with the published settings."""
    try:
        use_l2, use_lip = VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown OS-ELM variant {name!r}") from None
    delta = 1.0 if name == "oselm-l2" else 0.5
    kwargs = dict(use_l2=use_l2, use_lipschitz=use_lip, delta=delta)
    kwargs.update(overrides)
    return AgentConfig(**kwargs)


class Experience(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    d: int


@dataclass(frozen=True)
class QNetPair:
    theta1: OselmState
    theta2: OselmState

    def __post_init__(self):
        if self.theta1.shape != self.theta2.shape:
            raise ShapeError("online and target networks differ in shape")
        if self.theta1.params.alpha is not self.theta2.params.alpha:
            # alpha is shared storage, never a copy
            if not np.array_equal(self.theta1.params.alpha, self.theta2.params.alpha):
                raise ValueError("online and target networks must share alpha")


@dataclass
class InitBuffer:
    capacity: int
    entries: list[Experience] = field(default_factory=list)

    def store(self, exp: Experience) -> bool:
        if len(self.entries) >= self.capacity:
            return False
        self.entries.append(exp)
        return True

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def __len__(self) -> int:
        return len(self.entries)


class StepOutcome(NamedTuple):
    action: int
    reward: float
    done: bool
    trained: str | None  # "init", "seq" or None


class Environment(Protocol):
    def reset(self) -> np.ndarray: ...

    def step(self, action: int) -> tuple[np.ndarray, float, bool]: ...


def _scaled(s, cfg: AgentConfig) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if cfg.state_scale is None:
        return s
    return s / np.asarray(cfg.state_scale)


def encode_input(s: Sequence[float], a: int, cfg: AgentConfig) -> Matrix:
    if not 0 <= a < cfg.n_actions:
        raise IndexError(f"action {a} out of range for {cfg.n_actions} actions")
    return np.append(_scaled(s, cfg), cfg.action_codes[a]).reshape(1, -1)


def encode_all(s: Sequence[float], cfg: AgentConfig) -> Matrix:
    """One row per action: ``[s / state_scale, code_i]``."""
    s = _scaled(s, cfg)
    x = np.empty((cfg.n_actions, s.size + 1))
    x[:, :-1] = s
    x[:, -1] = cfg.action_codes
    return x


def q_values(net: OselmState, s: Sequence[float], cfg: AgentConfig) -> np.ndarray:
    return oselm.predict(net, encode_all(s, cfg))[:, 0]


def greedy(q: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. lowest index on ties
    return int(np.argmax(q))


def select_action(net: OselmState, s, cfg: AgentConfig, rng: np.random.Generator) -> int:
    """Greedy with probability ``eps1`` (the exploitation rate), else uniform."""
    if rng.random() < cfg.eps1:
        return greedy(q_values(net, s, cfg))
    return int(rng.integers(cfg.n_actions))


def bootstrap_target(r: float, d: int, q_next: np.ndarray, cfg: AgentConfig) -> float:
    return clip(cfg.clip_lo, r + (1 - d) * cfg.gamma * float(np.max(q_next)), cfg.clip_hi)


def compute_target(exp: Experience, target_net: OselmState, cfg: AgentConfig) -> float:
    if exp.d:
        return clip(cfg.clip_lo, exp.r, cfg.clip_hi)
    return bootstrap_target(exp.r, exp.d, q_values(target_net, exp.s_next, cfg), cfg)


def sync_target(pair: QNetPair) -> QNetPair:
    t1 = pair.theta1
    theta2 = replace(
        pair.theta2,
        params=pair.theta2.params.with_beta(t1.params.beta.copy()),
        p=t1.p.copy(),
        trained=t1.trained,
    )
    return QNetPair(t1, theta2)


def lipschitz_bound(pair: QNetPair, cfg: AgentConfig) -> float:
    beta_norm = sigma_max(pair.theta1.beta)
    if cfg.use_lipschitz:
        return beta_norm
    return sigma_max(pair.theta1.params.alpha) * beta_norm


def new_pair(cfg: AgentConfig, state_dim: int, rng: np.random.Generator) -> QNetPair:
    shape = NetworkShape(state_dim + 1, cfg.n_tilde, 1)
    params = elm_init(shape, rng, normalize_alpha=cfg.use_lipschitz,
                      weight_range=cfg.weight_range,
                      normalize_bias=cfg.use_lipschitz and cfg.normalize_bias)
    theta1 = OselmState.fresh(params)
    theta2 = OselmState.fresh(
        ElmParams(shape, params.alpha, params.bias, params.beta.copy())
    )
    return QNetPair(theta1, theta2)


class TeacherRangeError(AssertionError):
    pass


class OselmQAgent:
    """Runs the Determine / Observe / Store / Update loop on float64 networks."""

    def __init__(self, cfg: AgentConfig, state_dim: int, rng: np.random.Generator | None = None,
                 timer: OpTimer | None = None):
        self.cfg = cfg
        self.state_dim = state_dim
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.timer = timer if timer is not None else OpTimer()
        self.teacher_min = np.inf
        self.teacher_max = -np.inf
        self.reinitialize()

    def reinitialize(self) -> None:
        """Fresh random weights, empty buffer, untrained networks."""
        self.pair = new_pair(self.cfg, self.state_dim, self.rng)
        self.buffer = InitBuffer(self.cfg.n_tilde)
        self.t = 0
        self.episode = 0

    @property
    def trained(self) -> bool:
        return self.pair.theta1.trained

    # backend hooks; the fixed-point agent overrides these

    def online_q(self, s) -> np.ndarray:
        op = "predict_seq" if self.trained else "predict_init"
        with self.timer.time(op):
            return q_values(self.pair.theta1, s, self.cfg)

    def target_q(self, s) -> np.ndarray:
        op = "predict_seq" if self.trained else "predict_init"
        with self.timer.time(op):
            return q_values(self.pair.theta2, s, self.cfg)

    def _init_train(self, x0: Matrix, t0: Matrix) -> None:
        with self.timer.time("train_init"):
            theta1 = oselm.init_train(self.pair.theta1, x0, t0, self.cfg.init_delta)
        self.pair = QNetPair(theta1, self.pair.theta2)

    def _seq_train(self, x: Matrix, t: float) -> None:
        with self.timer.time("train_seq"):
            theta1 = oselm.seq_train(self.pair.theta1, x, np.array([[t]]))
        self.pair = QNetPair(theta1, self.pair.theta2)

    def _sync(self) -> None:
        self.pair = sync_target(self.pair)

    # algorithm

    def _check_teacher(self, t: float) -> None:
        if not self.cfg.clip_lo <= t <= self.cfg.clip_hi:
            raise TeacherRangeError(f"teacher {t} outside [{self.cfg.clip_lo}, {self.cfg.clip_hi}]")
        self.teacher_min = min(self.teacher_min, t)
        self.teacher_max = max(self.teacher_max, t)

    def target(self, exp: Experience) -> float:
        if exp.d:
            return clip(self.cfg.clip_lo, exp.r, self.cfg.clip_hi)
        return bootstrap_target(exp.r, exp.d, self.target_q(exp.s_next), self.cfg)

    def act(self, s) -> int:
        if self.rng.random() < self.cfg.eps1:
            return greedy(self.online_q(s))
        return int(self.rng.integers(self.cfg.n_actions))

    def step(self, env, s: np.ndarray, failed=None) -> tuple[np.ndarray, StepOutcome]:
        """One inner-loop iteration.

        ``failed`` is a callable telling a genuine failure apart from a
        time-limit cut; only failures get the shaped terminal reward.
        """
        cfg = self.cfg
        self.t += 1
        a = self.act(s)
        s_next, r, done = env.step(a)
        if done:
            is_failure = failed() if failed is not None else True
            if not (cfg.store_terminal and is_failure):
                return s_next, StepOutcome(a, r, True, None)
            if cfg.terminal_reward is not None:
                r = cfg.terminal_reward
        exp = Experience(s, a, float(r), s_next, int(done))
        just_filled = False
        if not self.trained:
            self.buffer.store(exp)
            just_filled = self.buffer.full
        r2 = self.rng.random()
        trained = None
        if just_filled:
            teachers = np.array([[self.target(e)] for e in self.buffer.entries])
            for t in teachers[:, 0]:
                self._check_teacher(float(t))
            x0 = np.vstack([encode_input(e.s, e.a, cfg) for e in self.buffer.entries])
            self._init_train(x0, teachers)
            trained = "init"
        elif self.trained and r2 < cfg.eps2:
            t = self.target(exp)
            self._check_teacher(t)
            self._seq_train(encode_input(s, a, cfg), t)
            trained = "seq"
        return s_next, StepOutcome(a, float(r), done, trained)

    def end_episode(self) -> None:
        self.episode += 1
        if self.episode % self.cfg.update_step == 0:
            self._sync()

    def run_episode(self, env) -> int:
        """Play one episode, training along the way; returns the step count."""
        s = env.reset()
        failed = getattr(env, "failed", None)
        steps = 0
        while True:
            s, out = self.step(env, s, failed)
            steps += 1
            if out.done:
                break
        self.end_episode()
        return steps


class FixedQ20Agent(OselmQAgent):
    """Same loop, but after initial training the networks run in Q20.

    The initial solve happens in float64 on the host. Its result is converted
    once; from then on prediction, sequential training and target sync all use
    the integer datapath, with the online and target networks as two beta banks.
    """

    def reinitialize(self) -> None:
        super().reinitialize()
        self.fixed: fx.FixedOselmState | None = None

    @property
    def overflow_count(self) -> int:
        return 0 if self.fixed is None else self.fixed.overflow.count

    def _fixed_q(self, s, bank: int) -> np.ndarray:
        x = fx.fx_convert(encode_all(s, self.cfg), self.fixed.overflow)
        return fx.fx_to_real(fx.fx_predict(self.fixed, x, bank))[:, 0]

    def online_q(self, s) -> np.ndarray:
        if self.fixed is None:
            return super().online_q(s)
        with self.timer.time("predict_seq"):
            return self._fixed_q(s, 1)

    def target_q(self, s) -> np.ndarray:
        if self.fixed is None:
            return super().target_q(s)
        with self.timer.time("predict_seq"):
            return self._fixed_q(s, 2)

    def _init_train(self, x0: Matrix, t0: Matrix) -> None:
        super()._init_train(x0, t0)
        self.fixed = fx.FixedOselmState.from_float(self.pair.theta1, self.pair.theta2)

    def _seq_train(self, x: Matrix, t: float) -> None:
        c = self.fixed.overflow
        with self.timer.time("train_seq"):
            self.fixed = fx.fx_seq_train(self.fixed, fx.fx_convert(x, c), fx.fx_convert([[t]], c))

    def _sync(self) -> None:
        if self.fixed is None:
            super()._sync()
        else:
            self.fixed.sync_target()
