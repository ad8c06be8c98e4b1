import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oselmq import fixedq20 as fx
from oselmq.elm import NetworkShape, elm_init
from oselmq.oselm import OselmState, init_train, predict, seq_train

raw32 = st.integers(fx.RAW_MIN, fx.RAW_MAX)


def test_convert_basics():
    assert fx.fx_convert(0.0) == 0 and fx.fx_to_real(fx.fx_convert(0.0)) == 0.0
    assert fx.fx_convert(1.0) == 1_048_576
    assert fx.fx_convert(5000.0) == fx.RAW_MAX
    assert fx.fx_to_real(fx.fx_convert(5000.0)) == 2048 - 2**-20
    assert fx.fx_convert(-5000.0) == fx.RAW_MIN


def test_convert_rounds_half_to_even():
    half = 2.0**-21
    assert fx.fx_convert(half) == 0
    assert fx.fx_convert(3 * half) == 2


def test_convert_counts_saturation():
    c = fx.OverflowCounter()
    fx.fx_convert([1e6, -1e6, 1.0], c)
    assert c.count == 2


@given(raw32)
def test_roundtrip_exact_for_representable(raw):
    v = raw * 2.0**-20
    assert fx.fx_convert(v) == raw
    assert fx.fx_to_real(np.int64(raw)) == v


def test_rejects_float_operands():
    with pytest.raises(TypeError):
        fx.fx_add(np.array([1.0]), np.array([2]))


def test_mul_identity_and_exact():
    one = fx.fx_convert(1.0)
    for v in (0.3, -7.25, 1999.0):
        x = fx.fx_convert(v)
        assert fx.fx_mul(one, x) == x
    assert fx.fx_mul(fx.fx_convert(0.5), fx.fx_convert(0.5)) == fx.fx_convert(0.25)


def test_ops_within_half_ulp_of_float(rng):
    a = fx.fx_convert(rng.uniform(-8, 8, 20_000))
    b = fx.fx_convert(rng.uniform(-8, 8, 20_000))
    af, bf = fx.fx_to_real(a), fx.fx_to_real(b)
    bound = 2.0**-19
    assert np.max(np.abs(fx.fx_to_real(fx.fx_mul(a, b)) - af * bf)) <= bound
    assert np.max(np.abs(fx.fx_to_real(fx.fx_add(a, b)) - (af + bf))) <= bound
    nz = np.abs(bf) > 0.5
    q = fx.fx_to_real(fx.fx_div(a[nz], b[nz]))
    assert np.max(np.abs(q - af[nz] / bf[nz])) <= bound


def test_div_truncates_toward_zero():
    three = fx.fx_convert(3.0)
    one = fx.fx_convert(1.0)
    assert fx.fx_div(one, three) == 349_525  # floor(2**20 / 3)
    assert fx.fx_div(-one, three) == -349_525
    assert fx.fx_div(one, -three) == -349_525


def test_div_by_zero():
    with pytest.raises(ZeroDivisionError):
        fx.fx_div(fx.fx_convert(1.0), np.int64(0))


def test_add_saturates_and_counts():
    c = fx.OverflowCounter()
    assert fx.fx_add(np.int64(fx.RAW_MAX), np.int64(5), c) == fx.RAW_MAX
    assert fx.fx_sub(np.int64(fx.RAW_MIN), np.int64(5), c) == fx.RAW_MIN
    assert c.count == 2


@given(raw32, raw32)
@settings(max_examples=200)
def test_commutative_bitwise(a, b):
    a, b = np.int64(a), np.int64(b)
    assert fx.fx_add(a, b) == fx.fx_add(b, a)
    assert fx.fx_mul(a, b) == fx.fx_mul(b, a)


def _sequential_dot(a, b):
    acc = 0
    for x, y in zip(a, b):
        acc += (int(x) * int(y) + (1 << 19)) >> 20
        acc = max(fx.RAW_MIN, min(fx.RAW_MAX, acc))
    return acc


def test_matmul_matches_single_accumulator(rng):
    a = fx.fx_convert(rng.uniform(-4, 4, (3, 16)))
    b = fx.fx_convert(rng.uniform(-4, 4, (16, 2)))
    got = fx.fx_matmul(a, b)
    for i in range(3):
        for j in range(2):
            assert got[i, j] == _sequential_dot(a[i], b[:, j])


def test_matmul_saturating_lane_replayed():
    big = fx.fx_convert(np.array([[1500.0, 1500.0, -1500.0]]))
    ones = fx.fx_convert(np.ones((3, 1)))
    c = fx.OverflowCounter()
    # 1500 + 1500 saturates at 2048 - ulp, then -1500 brings it back down
    got = fx.fx_matmul(big, ones, c)
    assert got[0, 0] == _sequential_dot(big[0], ones[:, 0])
    assert fx.fx_to_real(got[0, 0]) == pytest.approx(548.0, abs=1e-5)
    assert c.count == 1


def test_datapath_is_integer_only(rng):
    state = _trained_fixed(rng, 16)
    x = fx.fx_convert(rng.uniform(-1, 1, (1, 5)))
    with np.errstate(all="raise"):
        y = fx.fx_predict(state, x)
        nxt = fx.fx_seq_train(state, x, fx.fx_convert([[0.5]]))
    for arr in (y, nxt.beta1, nxt.p):
        assert arr.dtype == np.int64


def _trained_float(rng, n_tilde, k0=None):
    params = elm_init(NetworkShape(5, n_tilde, 1), rng, normalize_alpha=True,
                      weight_range=(-1.0, 1.0))
    k0 = k0 or n_tilde
    x0 = rng.uniform(-1, 1, (k0, 5))
    t0 = rng.uniform(-1, 1, (k0, 1))
    return init_train(OselmState.fresh(params), x0, t0, 0.5)


def _trained_fixed(rng, n_tilde):
    return fx.FixedOselmState.from_float(_trained_float(rng, n_tilde))


def test_predict_zero_beta(rng):
    state = _trained_fixed(rng, 8)
    state.beta1[:] = 0
    assert fx.fx_predict(state, fx.fx_convert(rng.uniform(-1, 1, (1, 5))))[0, 0] == 0


def test_predict_tracks_float(rng):
    float_state = _trained_float(rng, 64)
    fixed = fx.FixedOselmState.from_float(float_state)
    xs = rng.uniform(-8, 8, (2000, 5))
    got = fx.fx_to_real(fx.fx_predict(fixed, fx.fx_convert(xs)))
    want = predict(float_state, xs)
    assert np.max(np.abs(got - want)) <= 1e-3
    np.testing.assert_array_equal(fx.fx_predict(fixed, fx.fx_convert(xs[:3])),
                                  fx.fx_predict(fixed, fx.fx_convert(xs[:3])))


def test_zero_innovation_keeps_beta(rng):
    state = _trained_fixed(rng, 16)
    x = fx.fx_convert(rng.uniform(-1, 1, (1, 5)))
    t = fx.fx_predict(state, x)
    nxt = fx.fx_seq_train(state, x, t)
    assert np.max(np.abs(nxt.beta1 - state.beta1)) <= 1


def test_seq_train_tracks_float(rng):
    float_state = _trained_float(rng, 16, k0=64)
    fixed = fx.FixedOselmState.from_float(float_state)
    for _ in range(100):
        x = rng.uniform(-1, 1, (1, 5))
        t = rng.uniform(-1, 1, (1, 1))
        float_state = seq_train(float_state, x, t)
        fixed = fx.fx_seq_train(fixed, fx.fx_convert(x), fx.fx_convert(t))
    err = np.abs(fx.fx_to_real(fixed.beta1) - float_state.beta)
    assert err.max() <= 1e-2
    np.testing.assert_array_equal(fixed.p, fixed.p.T)


def test_banks_and_sync(rng):
    state = _trained_fixed(rng, 8)
    state.beta1 = state.beta1 + 5
    assert not np.array_equal(state.beta(1), state.beta(2))
    state.sync_target()
    np.testing.assert_array_equal(state.beta(1), state.beta(2))
    with pytest.raises(ValueError):
        state.beta(3)


def test_hex_dump_layout(rng, tmp_path):
    state = _trained_fixed(rng, 4)
    lines = state.hex_dump().splitlines()
    assert len(lines) == 5 * 4 + 4 + 4 + 4 + 16
    assert all(len(w) == 8 for w in lines)
    assert int(lines[0], 16) == int(state.alpha[0, 0]) & 0xFFFFFFFF
    neg = [i for i, v in enumerate(state.alpha.ravel()) if v < 0][0]
    assert int(lines[neg], 16) == (int(state.alpha.ravel()[neg]) + 2**32)
    state.write_hex(tmp_path / "state.hex")
    assert (tmp_path / "state.hex").read_text() == state.hex_dump()
