"""Three-layer DQN baseline trained by backpropagation.

Hand-written forward/backward passes, Adam, Huber loss, uniform experience
replay and a target network synchronized every ``update_step`` episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import AgentConfig, Experience, greedy
from .errors import ShapeError
from .timing import OpTimer

PARAM_NAMES = ("w1", "b1", "w2", "b2")

BUFFER_CAPACITY = 10_000
BATCH_SIZE = 32
LEARNING_RATE = 0.01


@dataclass
class MlpParams:
    w1: np.ndarray  # n x hidden
    b1: np.ndarray  # 1 x hidden
    w2: np.ndarray  # hidden x actions
    b2: np.ndarray  # 1 x actions

    @classmethod
    def init(cls, n: int, hidden: int, n_actions: int, rng: np.random.Generator) -> "MlpParams":
        # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
        k1 = 1.0 / np.sqrt(n)
        k2 = 1.0 / np.sqrt(hidden)
        return cls(
            w1=rng.uniform(-k1, k1, (n, hidden)),
            b1=rng.uniform(-k1, k1, (1, hidden)),
            w2=rng.uniform(-k2, k2, (hidden, n_actions)),
            b2=rng.uniform(-k2, k2, (1, n_actions)),
        )

    def copy(self) -> "MlpParams":
        return MlpParams(*(getattr(self, k).copy() for k in PARAM_NAMES))

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, k) for k in PARAM_NAMES]


def mlp_forward(p: MlpParams, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != p.w1.shape[0]:
        raise ShapeError(f"input shape {x.shape} does not match {p.w1.shape[0]} inputs")
    return np.maximum(x @ p.w1 + p.b1, 0.0) @ p.w2 + p.b2


def huber(residual: float, kappa: float = 1.0) -> tuple[float, float]:
    """Huber loss and its derivative with respect to the residual."""
    a = abs(residual)
    if a <= kappa:
        return 0.5 * residual * residual, residual
    return kappa * (a - 0.5 * kappa), float(np.sign(residual)) * kappa


def huber_vec(residual: np.ndarray, kappa: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(residual)
    quad = a <= kappa
    loss = np.where(quad, 0.5 * residual * residual, kappa * (a - 0.5 * kappa))
    grad = np.clip(residual, -kappa, kappa)
    return loss, grad


def loss_and_grads(p: MlpParams, x: np.ndarray, actions: np.ndarray, y: np.ndarray):
    """Mean Huber loss on the taken-action outputs, and its gradients."""
    k = x.shape[0]
    z1 = x @ p.w1 + p.b1
    h = np.maximum(z1, 0.0)
    q = h @ p.w2 + p.b2
    rows = np.arange(k)
    loss, dres = huber_vec(q[rows, actions] - y)
    dq = np.zeros_like(q)
    dq[rows, actions] = dres / k
    dw2 = h.T @ dq
    db2 = dq.sum(axis=0, keepdims=True)
    dz1 = (dq @ p.w2.T) * (z1 > 0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0, keepdims=True)
    return float(loss.mean()), MlpParams(dw1, db1, dw2, db2)


@dataclass
class AdamState:
    lr: float = LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, p: MlpParams, lr: float = LEARNING_RATE) -> "AdamState":
        arrs = p.arrays()
        return cls(lr=lr, m=[np.zeros_like(a) for a in arrs], v=[np.zeros_like(a) for a in arrs])

    def apply(self, p: MlpParams, grads: MlpParams) -> None:
        """In-place Adam update of ``p``."""
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for i, (w, g) in enumerate(zip(p.arrays(), grads.arrays())):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            w -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise."""

    def __init__(self, state_dim: int, capacity: int = BUFFER_CAPACITY):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.d = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, exp: Experience) -> None:
        i = self.cursor
        self.s[i] = exp.s
        self.a[i] = exp.a
        self.r[i] = exp.r
        self.s_next[i] = exp.s_next
        self.d[i] = exp.d
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < k:
            raise ValueError(f"cannot sample {k} from {self.size} transitions")
        return rng.integers(0, self.size, size=k)

    def batch(self, idx: np.ndarray):
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.d[idx]


def dqn_targets(target_p: MlpParams, r, s_next, d, gamma: float) -> np.ndarray:
    """Unclipped one-step bootstrap targets."""
    return r + (1.0 - d) * gamma * mlp_forward(target_p, s_next).max(axis=1)


def dqn_train_step(p: MlpParams, target_p: MlpParams, adam: AdamState, buf: ReplayBuffer,
                   gamma: float, rng: np.random.Generator, batch_size: int = BATCH_SIZE,
                   timer: OpTimer | None = None) -> float | None:
    """One Adam step on a uniformly sampled minibatch; ``None`` if the buffer is too small."""
    if len(buf) < batch_size:
        return None
    timer = timer or OpTimer()
    s, a, r, s_next, d = buf.batch(buf.sample_indices(batch_size, rng))
    with timer.time("predict_32"):
        y = dqn_targets(target_p, r, s_next, d, gamma)
    with timer.time("train_DQN"):
        loss, grads = loss_and_grads(p, s, a, y)
        adam.apply(p, grads)
    return loss


def dqn_select_action(p: MlpParams, s, eps1: float, rng: np.random.Generator,
                      timer: OpTimer | None = None) -> int:
    """Greedy with probability ``eps1``, as in the OS-ELM agent."""
    if rng.random() < eps1:
        x = np.asarray(s, dtype=np.float64).reshape(1, -1)
        if timer is None:
            return greedy(mlp_forward(p, x)[0])
        with timer.time("predict_1"):
            return greedy(mlp_forward(p, x)[0])
    return int(rng.integers(p.w2.shape[1]))


class DqnAgent:
    def __init__(self, cfg: AgentConfig, state_dim: int, rng: np.random.Generator | None = None,
                 timer: OpTimer | None = None, lr: float = LEARNING_RATE,
                 capacity: int = BUFFER_CAPACITY, batch_size: int = BATCH_SIZE):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.timer = timer if timer is not None else OpTimer()
        self.batch_size = batch_size
        self.params = MlpParams.init(state_dim, cfg.n_tilde, cfg.n_actions, self.rng)
        self.target = self.params.copy()
        self.adam = AdamState.for_params(self.params, lr)
        self.buffer = ReplayBuffer(state_dim, capacity)
        self.episode = 0

    def run_episode(self, env) -> int:
        cfg = self.cfg
        s = env.reset()
        failed = getattr(env, "failed", None)
        steps = 0
        while True:
            a = dqn_select_action(self.params, s, cfg.eps1, self.rng, self.timer)
            s_next, r, done = env.step(a)
            steps += 1
            store = True
            if done:
                is_failure = failed() if failed is not None else True
                store = cfg.store_terminal and is_failure
                if store and cfg.terminal_reward is not None:
                    r = cfg.terminal_reward
            if store:
                self.buffer.add(Experience(s, a, float(r), s_next, int(done)))
                dqn_train_step(self.params, self.target, self.adam, self.buffer, cfg.gamma,
                               self.rng, self.batch_size, self.timer)
            s = s_next
            if done:
                break
        self.episode += 1
        if self.episode % cfg.update_step == 0:
            self.target = self.params.copy()
        return steps
