import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oselmq import oselm
from oselmq.elm import NetworkShape, elm_fit, elm_init, hidden
from oselmq.errors import ShapeError, StateError
from oselmq.oselm import OselmState, init_train, predict, seq_train


def make_state(rng, n=5, n_tilde=16, m=1):
    return OselmState.fresh(elm_init(NetworkShape(n, n_tilde, m), rng, weight_range=(-1.0, 1.0)))


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def min_eigenvalue(sym, iters=500):
    """Inverse power iteration for the smallest eigenvalue of an SPD matrix."""
    v = np.ones(sym.shape[0])
    for _ in range(iters):
        v = np.linalg.solve(sym, v)
        v /= np.linalg.norm(v)
    return float(v @ sym @ v)


def test_init_zero_target(rng):
    st0 = init_train(make_state(rng), rng.normal(size=(20, 5)), np.zeros((20, 1)), 0.5)
    assert np.all(st0.beta == 0.0)
    assert np.all(np.linalg.eigvalsh(st0.p) > 0)


def test_init_without_ridge_equals_elm_fit(rng):
    s = make_state(rng)
    x, t = rng.normal(size=(40, 5)), rng.normal(size=(40, 1))
    trained = init_train(s, x, t, 0.0)
    np.testing.assert_array_equal(trained.beta, elm_fit(s.params, x, t, 0.0).beta)


@pytest.mark.parametrize("k0", [1, 3, 64])
def test_init_l2_finite_for_any_chunk(rng, k0):
    s = OselmState.fresh(elm_init(NetworkShape(5, 64, 1), rng, normalize_alpha=True))
    st0 = init_train(s, rng.normal(size=(k0, 5)), rng.normal(size=(k0, 1)), 1.0)
    assert np.all(np.isfinite(st0.beta))


def test_init_twice_rejected(rng):
    s = init_train(make_state(rng), rng.normal(size=(20, 5)), rng.normal(size=(20, 1)), 0.5)
    with pytest.raises(StateError):
        init_train(s, rng.normal(size=(20, 5)), rng.normal(size=(20, 1)), 0.5)


def test_seq_before_init_rejected(rng):
    with pytest.raises(StateError):
        seq_train(make_state(rng), np.zeros((1, 5)), np.zeros((1, 1)))


def test_seq_requires_single_row(rng):
    s = init_train(make_state(rng), rng.normal(size=(20, 5)), rng.normal(size=(20, 1)), 0.5)
    with pytest.raises(ShapeError):
        seq_train(s, np.zeros((2, 5)), np.zeros((2, 1)))


def test_zero_innovation_keeps_beta(rng):
    s = init_train(make_state(rng), rng.normal(size=(20, 5)), rng.normal(size=(20, 1)), 0.5)
    x = rng.normal(size=(1, 5))
    s2 = seq_train(s, x, predict(s, x))
    np.testing.assert_allclose(s2.beta, s.beta, atol=1e-14)
    assert not np.allclose(s2.p, s.p)


def test_one_step_equals_batch_ridge(rng):
    s = make_state(rng)
    x0, t0 = rng.normal(size=(16, 5)), rng.normal(size=(16, 1))
    x, t = rng.normal(size=(1, 5)), rng.normal(size=(1, 1))
    seq = seq_train(init_train(s, x0, t0, 0.5), x, t)
    batch = init_train(s, np.vstack([x0, x]), np.vstack([t0, t]), 0.5)
    assert rel_err(seq.beta, batch.beta) <= 1e-6


def test_200_steps_match_closed_form(rng):
    s = make_state(rng)
    x0, t0 = rng.normal(size=(16, 5)), rng.normal(size=(16, 1))
    xs, ts = rng.normal(size=(200, 5)), rng.normal(size=(200, 1))
    cur = init_train(s, x0, t0, 0.5)
    for i in range(200):
        cur = seq_train(cur, xs[i:i + 1], ts[i:i + 1])
    ref = elm_fit(s.params, np.vstack([x0, xs]), np.vstack([t0, ts]), 0.5)
    assert rel_err(cur.beta, ref.beta) <= 1e-5


@given(st.integers(0, 2**32 - 1), st.integers(1, 20), st.sampled_from([0.5, 1.0, 3.0]))
@settings(max_examples=25, deadline=None)
def test_rls_ridge_equivalence(seed, k0, delta):
    rng = np.random.default_rng(seed)
    s = make_state(rng)
    x0, t0 = rng.normal(size=(k0, 5)), rng.normal(size=(k0, 1))
    xs, ts = rng.normal(size=(30, 5)), rng.normal(size=(30, 1))
    cur = init_train(s, x0, t0, delta)
    for i in range(30):
        cur = seq_train(cur, xs[i:i + 1], ts[i:i + 1])
    ref = elm_fit(s.params, np.vstack([x0, xs]), np.vstack([t0, ts]), delta)
    assert rel_err(cur.beta, ref.beta) <= 1e-5


def test_order_insensitive(rng):
    s = make_state(rng)
    x0, t0 = rng.normal(size=(16, 5)), rng.normal(size=(16, 1))
    xs, ts = rng.normal(size=(100, 5)), rng.normal(size=(100, 1))
    perm = rng.permutation(100)
    a = b = init_train(s, x0, t0, 0.5)
    for i in range(100):
        a = seq_train(a, xs[i:i + 1], ts[i:i + 1])
        j = perm[i]
        b = seq_train(b, xs[j:j + 1], ts[j:j + 1])
    assert rel_err(a.beta, b.beta) <= 1e-5


def test_p_symmetric_positive_definite_long_run(rng):
    s = make_state(rng)
    cur = init_train(s, rng.normal(size=(16, 5)), rng.normal(size=(16, 1)), 0.5)
    xs, ts = rng.normal(size=(10_000, 5)), rng.normal(size=(10_000, 1))
    for i in range(10_000):
        cur = seq_train(cur, xs[i:i + 1], ts[i:i + 1])
        if i % 1000 == 999:
            np.testing.assert_array_equal(cur.p, cur.p.T)
            assert min_eigenvalue(cur.p) > 0
    assert min_eigenvalue(cur.p) > 0


def test_prediction_converges_on_linear_target(rng):
    s = make_state(rng, n_tilde=32)
    w = rng.normal(size=(5, 1))
    x0 = rng.normal(size=(32, 5))
    cur = init_train(s, x0, x0 @ w, 0.5)
    xs = rng.normal(size=(500, 5))
    for i in range(500):
        cur = seq_train(cur, xs[i:i + 1], xs[i:i + 1] @ w)
    ref = elm_fit(s.params, np.vstack([x0, xs]), np.vstack([x0, xs]) @ w, 0.5)
    xt = rng.normal(size=(50, 5))
    got = np.abs(predict(cur, xt) - xt @ w).mean()
    oracle = np.abs(hidden(s.params, xt) @ ref.beta - xt @ w).mean()
    assert got <= oracle + 1e-6


def test_predict_before_training_uses_random_beta(rng):
    s = make_state(rng)
    x = rng.normal(size=(1, 5))
    np.testing.assert_array_equal(predict(s, x), hidden(s.params, x) @ s.params.beta)
    np.testing.assert_array_equal(predict(s, x), predict(s, x))


def test_serialization_roundtrip(rng, tmp_path):
    s = init_train(make_state(rng, n_tilde=8, m=2), rng.normal(size=(10, 5)),
                   rng.normal(size=(10, 2)), 0.5)
    blob = oselm.dumps(s)
    assert blob[:4] == b"OSLM"
    assert int.from_bytes(blob[4:8], "little") == oselm.FORMAT_VERSION
    assert [int.from_bytes(blob[i:i + 4], "little") for i in (8, 12, 16)] == [5, 8, 2]
    assert len(blob) == 20 + 8 * (5 * 8 + 8 + 8 * 2 + 64)
    back = oselm.loads(blob)
    for a, b in [(s.params.alpha, back.params.alpha), (s.params.bias, back.params.bias),
                 (s.beta, back.beta), (s.p, back.p)]:
        np.testing.assert_array_equal(a, b)
    path = tmp_path / "net.oslm"
    oselm.save(s, path)
    np.testing.assert_array_equal(oselm.load(path).p, s.p)


def test_serialization_rejects_garbage():
    with pytest.raises(ValueError):
        oselm.loads(b"XXXX" + bytes(16))
