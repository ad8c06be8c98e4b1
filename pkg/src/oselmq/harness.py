"""Experiment orchestration: designs, trials, reset rule, CSVs and microbenchmarks."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fixedq20 as fx
from . import oselm
from .agent import (
    VARIANTS,
    AgentConfig,
    Experience,
    FixedQ20Agent,
    OselmQAgent,
    TeacherRangeError,
    bootstrap_target,
    encode_all,
    encode_input,
    greedy,
)
from .cartpole import STATE_DIM, CartPole
from .dqn import (
    BATCH_SIZE,
    BUFFER_CAPACITY,
    AdamState,
    DqnAgent,
    MlpParams,
    ReplayBuffer,
    dqn_targets,
    loss_and_grads,
    mlp_forward,
)
from .elm import NetworkShape, elm_fit, elm_init, elm_predict
from .errors import ConfigError
from .timing import OP_CLASSES, OpTimer

ALGOS = (*VARIANTS, "elm", "dqn", "fixed")
RESETTABLE = (*VARIANTS, "elm", "fixed")

SOLVE_WINDOW = 100
# Rough half-ranges of the CartPole state over a balancing run.
CARTPOLE_SCALE = (2.4, 3.0, 0.21, 3.0)
# minibatch drawn from the replay buffer for each ELM refit
ELM_BATCH = 1024


def canonical_agent_config(algo: str, **overrides) -> AgentConfig:
    """Benchmark settings for one design.

    All designs store the failing transition with reward -1. ELM-family
    networks use zero-centred input weights, a bias normalized together with
    alpha, and states divided by :data:`CARTPOLE_SCALE`.
    """
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}; expected one of {', '.join(ALGOS)}")
    kw: dict = dict(terminal_reward=-1.0, store_terminal=True)
    if algo in VARIANTS:
        use_l2, use_lip = VARIANTS[algo]
        kw.update(use_l2=use_l2, use_lipschitz=use_lip, delta=1.0 if algo == "oselm-l2" else 0.5)
    elif algo in ("elm", "fixed"):
        # the ELM baseline needs a ridge term for its batch solve; the Q20 design
        # is the proposed network on a fixed-point datapath
        kw.update(use_l2=True, use_lipschitz=algo == "fixed", delta=0.5)
    if algo != "dqn":
        kw.update(weight_range=(-1.0, 1.0), normalize_bias=True, state_scale=CARTPOLE_SCALE)
    kw.update(overrides)
    return AgentConfig(**kw)


@dataclass(frozen=True)
class RunConfig:
    algo: str
    agent: AgentConfig
    max_episodes: int = 3000
    trials: int = 1
    reset_after: int = 300
    solve_threshold: float = 195.0
    out_dir: str | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {', '.join(ALGOS)}")
        if self.max_episodes < 1 or self.trials < 1 or self.reset_after < 1:
            raise ConfigError("max_episodes, trials and reset_after must be positive")

    @property
    def resets_enabled(self) -> bool:
        return self.algo in RESETTABLE


@dataclass
class TrialResult:
    seed: int
    steps: list[int] = field(default_factory=list)
    episodes_to_solve: int | None = None
    resets: int = 0
    reset_marks: list[int] = field(default_factory=list)  # resets_so_far per episode
    timing_ns: dict[str, int] = field(default_factory=dict)
    calls: dict[str, int] = field(default_factory=dict)
    overflow: int = 0
    teacher_range: tuple[float, float] | None = None

    @property
    def solved(self) -> bool:
        return self.episodes_to_solve is not None

    def moving_averages(self) -> np.ndarray:
        steps = np.asarray(self.steps, dtype=np.float64)
        csum = np.concatenate([[0.0], np.cumsum(steps)])
        idx = np.arange(1, steps.size + 1)
        lo = np.maximum(idx - SOLVE_WINDOW, 0)
        return (csum[idx] - csum[lo]) / (idx - lo)

    @property
    def moving_average(self) -> float:
        return float(self.moving_averages()[-1]) if self.steps else 0.0

    @property
    def compute_ns(self) -> int:
        return sum(self.timing_ns.values())

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "episodes": len(self.steps),
            "episodes_to_solve": self.episodes_to_solve,
            "resets": self.resets,
            "final_moving_avg_100": round(self.moving_average, 6),
            "best_moving_avg_100": round(float(self.moving_averages().max()), 6) if self.steps else 0.0,
            "compute_ns": self.compute_ns,
            "timing_ns": dict(self.timing_ns),
            "calls": dict(self.calls),
            "overflow": self.overflow,
            "teacher_range": list(self.teacher_range) if self.teacher_range else None,
        }


class ElmAgent:
    """Batch ELM baseline on the single-output Q model.

    Every transition goes to a replay buffer. At each target-sync boundary
    beta is refitted in closed form on a uniformly drawn minibatch, with
    clipped bootstrap targets computed from the previous fit.
    """

    def __init__(self, cfg: AgentConfig, state_dim: int, rng: np.random.Generator | None = None,
                 timer: OpTimer | None = None, capacity: int = BUFFER_CAPACITY,
                 batch_size: int = ELM_BATCH):
        self.cfg = cfg
        self.state_dim = state_dim
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.timer = timer if timer is not None else OpTimer()
        self.capacity = capacity
        self.batch_size = batch_size
        self.teacher_min = np.inf
        self.teacher_max = -np.inf
        self.reinitialize()

    def reinitialize(self) -> None:
        shape = NetworkShape(self.state_dim + 1, self.cfg.n_tilde, 1)
        self.params = elm_init(shape, self.rng, normalize_alpha=self.cfg.use_lipschitz,
                               weight_range=self.cfg.weight_range,
                               normalize_bias=self.cfg.use_lipschitz and self.cfg.normalize_bias)
        self.target_params = self.params
        self.buffer = ReplayBuffer(self.state_dim, self.capacity)
        self.episode = 0

    def _q(self, params, s) -> np.ndarray:
        return elm_predict(params, encode_all(s, self.cfg))[:, 0]

    def _refit(self) -> None:
        cfg = self.cfg
        k = min(len(self.buffer), self.batch_size)
        s, a, r, s_next, d = self.buffer.batch(self.buffer.sample_indices(k, self.rng))
        with self.timer.time("predict_init"):
            nxt = np.vstack([encode_all(sn, cfg) for sn in s_next])
            q_next = elm_predict(self.target_params, nxt)[:, 0].reshape(k, cfg.n_actions)
        t = np.array([[bootstrap_target(r[i], int(d[i]), q_next[i], cfg)] for i in range(k)])
        lo, hi = float(t.min()), float(t.max())
        if lo < cfg.clip_lo or hi > cfg.clip_hi:
            raise TeacherRangeError(f"teacher outside [{cfg.clip_lo}, {cfg.clip_hi}]")
        self.teacher_min = min(self.teacher_min, lo)
        self.teacher_max = max(self.teacher_max, hi)
        x = np.vstack([encode_input(s[i], int(a[i]), cfg) for i in range(k)])
        with self.timer.time("train_init"):
            self.params = elm_fit(self.params, x, t, cfg.init_delta)

    def run_episode(self, env) -> int:
        cfg = self.cfg
        s = env.reset()
        failed = getattr(env, "failed", None)
        steps = 0
        while True:
            if self.rng.random() < cfg.eps1:
                with self.timer.time("predict_seq"):
                    a = greedy(self._q(self.params, s))
            else:
                a = int(self.rng.integers(cfg.n_actions))
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
            s = s_next
            if done:
                break
        self.episode += 1
        if self.episode % cfg.update_step == 0 and len(self.buffer) > 0:
            self._refit()
            self.target_params = self.params
        return steps


def make_agent(algo: str, cfg: AgentConfig, rng: np.random.Generator, timer: OpTimer):
    if algo in VARIANTS:
        return OselmQAgent(cfg, STATE_DIM, rng, timer)
    if algo == "fixed":
        return FixedQ20Agent(cfg, STATE_DIM, rng, timer)
    if algo == "elm":
        return ElmAgent(cfg, STATE_DIM, rng, timer)
    if algo == "dqn":
        return DqnAgent(cfg, STATE_DIM, rng, timer)
    raise ConfigError(f"unknown algo {algo!r}")


def run_trial(cfg: RunConfig, seed: int) -> TrialResult:
    """Train until the moving average reaches the threshold or episodes run out."""
    timer = OpTimer()
    agent_cfg = replace(cfg.agent, seed=seed)
    ss = np.random.SeedSequence(seed)
    agent_seed, env_seed = ss.spawn(2)
    agent = make_agent(cfg.algo, agent_cfg, np.random.default_rng(agent_seed), timer)
    env = CartPole(rng=np.random.default_rng(env_seed))
    result = TrialResult(seed=seed)
    window_sum = 0
    since_reset = 0
    for ep in range(cfg.max_episodes):
        n = agent.run_episode(env)
        result.steps.append(n)
        result.reset_marks.append(result.resets)
        window_sum += n
        if len(result.steps) > SOLVE_WINDOW:
            window_sum -= result.steps[-SOLVE_WINDOW - 1]
        since_reset += 1
        if len(result.steps) >= SOLVE_WINDOW and window_sum / SOLVE_WINDOW >= cfg.solve_threshold:
            result.episodes_to_solve = ep + 1
            break
        if cfg.resets_enabled and since_reset >= cfg.reset_after:
            agent.reinitialize()
            result.resets += 1
            since_reset = 0
    result.timing_ns = timer.as_dict()
    result.calls = {op: int(timer.calls.get(op, 0)) for op in OP_CLASSES}
    result.overflow = getattr(agent, "overflow_count", 0)
    lo, hi = getattr(agent, "teacher_min", np.inf), getattr(agent, "teacher_max", -np.inf)
    if lo <= hi:
        result.teacher_range = (float(lo), float(hi))
    return result


def trial_seeds(base_seed: int, trials: int) -> list[int]:
    return [base_seed + k for k in range(trials)]


def run_trials(cfg: RunConfig, base_seed: int = 0) -> list[TrialResult]:
    return [run_trial(cfg, s) for s in trial_seeds(base_seed, cfg.trials)]


def _timing_aggregate(results: list[TrialResult]) -> dict:
    if not results:
        return {op: None for op in OP_CLASSES}
    return {op: statistics.fmean(r.timing_ns.get(op, 0) for r in results) for op in OP_CLASSES}


def aggregate(results: list[TrialResult]) -> dict:
    """Solve statistics plus mean per-op time over all trials and over solved ones."""
    solved = [r for r in results if r.solved]
    eps = [r.episodes_to_solve for r in solved]
    return {
        "trials": len(results),
        "solved": len(solved),
        "median_episodes_to_solve": statistics.median(eps) if eps else None,
        "median_compute_ns_to_solve": statistics.median(r.compute_ns for r in solved) if solved else None,
        "timing_ns_unfiltered": _timing_aggregate(results),
        "timing_ns_solved_only": _timing_aggregate(solved),
    }


CSV_HEADER = ("episode", "steps", "moving_avg_100", "resets_so_far")


def write_csv(result: TrialResult, path: str | Path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i, (n, ma, resets) in enumerate(
                zip(result.steps, result.moving_averages(), result.reset_marks), start=1
            ):
                w.writerow([i, n, repr(float(ma)), resets])
    except OSError as exc:
        raise OSError(f"cannot write training curve to {path}: {exc}") from exc


def read_csv(path: str | Path) -> list[tuple[int, int, float, int]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [(int(e), int(s), float(m), int(r)) for e, s, m, r in rows[1:]]


# microbenchmarks

def _time_op(fn, reps: int) -> dict:
    samples = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples[i] = time.perf_counter_ns() - t0
    return {"median_ns": float(np.median(samples)), "mean_ns": float(samples.mean()), "reps": reps}


def _trained_oselm(cfg: AgentConfig, rng: np.random.Generator):
    shape = NetworkShape(STATE_DIM + 1, cfg.n_tilde, 1)
    params = elm_init(shape, rng, normalize_alpha=cfg.use_lipschitz, weight_range=cfg.weight_range,
                      normalize_bias=cfg.use_lipschitz and cfg.normalize_bias)
    x0 = rng.uniform(-1, 1, (cfg.n_tilde, shape.n))
    t0 = rng.uniform(-1, 1, (cfg.n_tilde, 1))
    fresh = oselm.OselmState.fresh(params)
    return fresh, x0, t0, oselm.init_train(fresh, x0, t0, cfg.init_delta)


def benchmark_ops(cfg: RunConfig, reps: int = 1000, seed: int = 0) -> dict:
    """Median and mean single-execution time of each operation class.

    Runs in the calling thread. Keys are always the full op-class list in a
    fixed order; classes the design does not use map to ``None``.
    """
    if reps < 1:
        raise ConfigError("reps must be positive")
    rng = np.random.default_rng(seed)
    a_cfg = cfg.agent
    report: dict[str, dict | None] = {op: None for op in OP_CLASSES}
    x1 = rng.uniform(-1, 1, (1, STATE_DIM + 1))
    s = rng.uniform(-0.05, 0.05, STATE_DIM)
    if cfg.algo == "elm":
        fresh, _, _, _ = _trained_oselm(a_cfg, rng)
        xb = rng.uniform(-1, 1, (ELM_BATCH, STATE_DIM + 1))
        tb = rng.uniform(-1, 1, (ELM_BATCH, 1))
        report["train_init"] = _time_op(lambda: elm_fit(fresh.params, xb, tb, a_cfg.init_delta), reps)
        report["predict_seq"] = _time_op(lambda: elm_predict(fresh.params, encode_all(s, a_cfg)), reps)
    elif cfg.algo in VARIANTS:
        fresh, x0, t0, state = _trained_oselm(a_cfg, rng)
        t1 = np.array([[0.5]])
        report["train_seq"] = _time_op(lambda: oselm.seq_train(state, x1, t1), reps)
        report["predict_seq"] = _time_op(lambda: oselm.predict(state, encode_all(s, a_cfg)), reps)
        report["train_init"] = _time_op(lambda: oselm.init_train(fresh, x0, t0, a_cfg.init_delta), reps)
        report["predict_init"] = _time_op(lambda: oselm.predict(fresh, encode_all(s, a_cfg)), reps)
    elif cfg.algo == "fixed":
        fresh, x0, t0, state = _trained_oselm(a_cfg, rng)
        fstate = fx.FixedOselmState.from_float(state)
        fx1 = fx.fx_convert(x1)
        ft = fx.fx_convert([[0.5]])
        fxs = fx.fx_convert(encode_all(s, a_cfg))
        report["train_seq"] = _time_op(lambda: fx.fx_seq_train(fstate, fx1, ft), reps)
        report["predict_seq"] = _time_op(lambda: fx.fx_predict(fstate, fxs), reps)
        report["train_init"] = _time_op(lambda: oselm.init_train(fresh, x0, t0, a_cfg.init_delta), reps)
        report["predict_init"] = _time_op(lambda: oselm.predict(fresh, encode_all(s, a_cfg)), reps)
    else:
        p = MlpParams.init(STATE_DIM, a_cfg.n_tilde, a_cfg.n_actions, rng)
        target = p.copy()
        adam = AdamState.for_params(p)
        buf = ReplayBuffer(STATE_DIM, BUFFER_CAPACITY)
        for _ in range(BATCH_SIZE * 4):
            buf.add(Experience(rng.uniform(-0.1, 0.1, STATE_DIM), int(rng.integers(2)), 1.0,
                               rng.uniform(-0.1, 0.1, STATE_DIM), 0))
        sb, ab, rb, snb, db = buf.batch(buf.sample_indices(BATCH_SIZE, rng))
        y = dqn_targets(target, rb, snb, db, a_cfg.gamma)

        def train_step():
            _, grads = loss_and_grads(p, sb, ab, y)
            adam.apply(p, grads)

        report["train_DQN"] = _time_op(train_step, reps)
        report["predict_1"] = _time_op(lambda: mlp_forward(p, s.reshape(1, -1)), reps)
        report["predict_32"] = _time_op(lambda: dqn_targets(target, rb, snb, db, a_cfg.gamma), reps)
    return {"algo": cfg.algo, "n_tilde": a_cfg.n_tilde, "ops": report}

