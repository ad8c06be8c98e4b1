"""Spot checks of the library against independent reference implementations.

Each check returns ``(ok, detail)``. ``run_all`` is what ``oselmq oracle`` prints.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import fixedq20 as fx
from . import oracles
from .agent import AgentConfig, Experience, compute_target, new_pair, q_values
from .cartpole import CartPoleState, dynamics
from .dqn import MlpParams, huber, loss_and_grads, mlp_forward
from .elm import NetworkShape, elm_fit, elm_init, elm_predict
from .matrix import frobenius_norm, inverse, matmul, sigma_max
from .oselm import OselmState, init_train, seq_train

Check = Callable[[np.random.Generator], tuple[bool, str]]


def _matmul(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    err = np.max(np.abs(matmul(a, b) - np.array(oracles.naive_matmul(a.tolist(), b.tolist()))))
    return err <= 1e-12, f"max error {err:.2e}"


def _inverse(rng):
    a = rng.normal(size=(8, 8))
    m = a.T @ a + np.eye(8)
    res = frobenius_norm(inverse(m) @ m - np.eye(8))
    return res <= 1e-8, f"residual {res:.2e}"


def _sigma_max(rng):
    a = rng.normal(size=(6, 4))
    want = oracles.jacobi_sigma_max(a)
    err = abs(sigma_max(a) - want)
    return err <= 1e-8, f"|diff| {err:.2e} vs Jacobi"


def _frobenius(rng):
    # rank-one matrices meet the bound with equality, hence the rounding slack
    ok = all(frobenius_norm(a) * (1 + 1e-12) >= sigma_max(a)
             for a in (rng.normal(size=rng.integers(1, 12, 2)) for _ in range(100)))
    return ok, "100 matrices"


def _normalized_alpha(rng):
    p = elm_init(NetworkShape(5, 32, 1), rng, normalize_alpha=True)
    s = sigma_max(p.alpha)
    return abs(s - 1) <= 1e-6, f"sigma_max(alpha) = {s:.9f}"


def _elm_predict(rng):
    p = elm_init(NetworkShape(3, 6, 2), rng, weight_range=(-1.0, 1.0))
    x = rng.normal(size=(4, 3))
    want = np.array(oracles.scalar_hidden(x, p.alpha, p.bias)) @ p.beta
    err = np.max(np.abs(elm_predict(p, x) - want))
    return err <= 1e-12, f"max error {err:.2e}"


def _least_squares(rng):
    p = elm_init(NetworkShape(3, 4, 1), rng, weight_range=(-1.0, 1.0))
    x = rng.normal(size=(8, 3))
    t = rng.normal(size=(8, 1))
    fit = elm_fit(p, x, t)
    h = np.array(oracles.scalar_hidden(x, p.alpha, p.bias))
    beta = oracles.exact_ridge(h, t, 0.0)
    got = np.linalg.norm(elm_predict(fit, x) - t)
    want = np.linalg.norm(h @ beta - t)
    return abs(got - want) <= 1e-8, f"residual {got:.10f} vs {want:.10f}"


def _rls_equals_ridge(rng):
    shape = NetworkShape(5, 16, 1)
    p = elm_init(shape, rng, normalize_alpha=True, weight_range=(-1.0, 1.0))
    x = rng.uniform(-1, 1, (216, 5))
    t = rng.uniform(-1, 1, (216, 1))
    st = init_train(OselmState.fresh(p), x[:16], t[:16], 0.5)
    for i in range(16, 216):
        st = seq_train(st, x[i:i + 1], t[i:i + 1])
    ref = elm_fit(p, x, t, 0.5).beta
    rel = np.linalg.norm(st.beta - ref) / np.linalg.norm(ref)
    return rel <= 1e-5, f"relative error {rel:.2e} after 200 steps"


def _target_clip(rng):
    cfg = AgentConfig()
    pair = new_pair(cfg, 4, rng)
    s = np.zeros(4)
    q = q_values(pair.theta2, s, cfg)
    scale = 0.5 / np.max(q)
    beta = pair.theta2.params.beta * scale
    net = OselmState(pair.theta2.params.with_beta(beta), pair.theta2.p)
    t = compute_target(Experience(s, 0, 1.0, s, 0), net, cfg)
    return t == 1.0, f"clip(1 + 0.99 * 0.5) = {t}"


def _cartpole(rng):
    got = dynamics(CartPoleState(0.0, 0.0, 0.0, 0.0), 1)
    want = oracles.cartpole_euler_step(0.0, 0.0, 0.0, 0.0, 10.0)
    err = max(abs(a - b) for a, b in zip(got, want))
    ok = err <= 1e-12 and abs(got.x_dot - 0.19512) <= 5e-6 and abs(got.theta_dot + 0.29268) <= 5e-6
    return ok, f"x_dot={got.x_dot:.6f} theta_dot={got.theta_dot:.6f}"


def _mlp(rng):
    p = MlpParams.init(4, 8, 2, rng)
    x = rng.normal(size=(3, 4))
    want = np.array(oracles.scalar_mlp(x, p.w1, p.b1, p.w2, p.b2))
    err = np.max(np.abs(mlp_forward(p, x) - want))
    return err <= 1e-12, f"max error {err:.2e}"


def _huber(rng):
    ok = huber(0.0) == (0.0, 0.0) and huber(0.5) == (0.125, 0.5) and huber(3.0) == (2.5, 1.0)
    return ok, "r in {0, 0.5, 3}"


def _gradient(rng):
    p = MlpParams.init(4, 8, 2, rng)
    x = rng.normal(size=(6, 4))
    a = rng.integers(0, 2, 6)
    y = rng.normal(size=6)
    _, grads = loss_and_grads(p, x, a, y)
    arrays = p.arrays()
    num = oracles.central_difference(lambda: loss_and_grads(p, x, a, y)[0], arrays, 1e-5)
    worst = 0.0
    for ana, fd in zip(grads.arrays(), num):
        worst = max(worst, np.linalg.norm(ana - fd) / max(np.linalg.norm(fd), 1e-12))
    return worst <= 1e-4, f"worst relative error {worst:.2e}"


def _fixed_ops(rng):
    a = fx.fx_convert(rng.uniform(-8, 8, 10_000))
    b = fx.fx_convert(rng.uniform(-8, 8, 10_000))
    af, bf = fx.fx_to_real(a), fx.fx_to_real(b)
    err = max(np.max(np.abs(fx.fx_to_real(fx.fx_mul(a, b)) - af * bf)),
              np.max(np.abs(fx.fx_to_real(fx.fx_add(a, b)) - (af + bf))))
    return err <= 2.0**-19, f"max error {err:.2e}"


def _fixed_predict(rng):
    p = elm_init(NetworkShape(5, 64, 1), rng, normalize_alpha=True, weight_range=(-1.0, 1.0))
    x0 = rng.uniform(-1, 1, (64, 5))
    st = init_train(OselmState.fresh(p), x0, rng.uniform(-1, 1, (64, 1)), 0.5)
    fst = fx.FixedOselmState.from_float(st)
    x = rng.uniform(-8, 8, (1000, 5))
    err = np.max(np.abs(fx.fx_to_real(fx.fx_predict(fst, fx.fx_convert(x))) - elm_predict(st.params, x)))
    return err <= 1e-3, f"max error {err:.2e}"


CHECKS: dict[str, Check] = {
    "matmul vs triple loop": _matmul,
    "inverse residual": _inverse,
    "sigma_max vs Jacobi": _sigma_max,
    "frobenius >= sigma_max": _frobenius,
    "normalized alpha": _normalized_alpha,
    "elm_predict vs scalar loop": _elm_predict,
    "elm_fit vs exact least squares": _least_squares,
    "sequential RLS vs batch ridge": _rls_equals_ridge,
    "clipped bootstrap target": _target_clip,
    "cartpole push from rest": _cartpole,
    "mlp_forward vs scalar loop": _mlp,
    "huber branches": _huber,
    "dqn gradient vs finite differences": _gradient,
    "Q20 ops vs float": _fixed_ops,
    "Q20 predict vs float": _fixed_predict,
}


def run_all(seed: int = 0) -> list[tuple[str, bool, str]]:
    out = []
    for name, check in CHECKS.items():
        rng = np.random.default_rng(seed)
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
