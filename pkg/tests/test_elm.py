import numpy as np
import pytest

from oselmq import oracles
from oselmq.elm import NetworkShape, elm_fit, elm_init, elm_predict, hidden
from oselmq.errors import ShapeError, SingularMatrixError
from oselmq.matrix import frobenius_norm, sigma_max


@pytest.fixture
def params(rng):
    return elm_init(NetworkShape(5, 16, 1), rng)


def test_shape_validation():
    with pytest.raises(ValueError):
        NetworkShape(0, 4, 1)


def test_init_deterministic():
    a = elm_init(NetworkShape(5, 64, 1), np.random.default_rng(7), normalize_alpha=True)
    b = elm_init(NetworkShape(5, 64, 1), np.random.default_rng(7), normalize_alpha=True)
    for name in ("alpha", "bias", "beta"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_init_unnormalized_in_unit_interval(rng):
    p = elm_init(NetworkShape(5, 64, 1), rng)
    for arr in (p.alpha, p.bias, p.beta):
        assert arr.min() >= 0.0 and arr.max() <= 1.0


def test_init_normalized_alpha(rng):
    p = elm_init(NetworkShape(5, 64, 1), rng, normalize_alpha=True)
    assert sigma_max(p.alpha) == pytest.approx(1.0, abs=1e-6)


def test_init_symmetric_range(rng):
    p = elm_init(NetworkShape(5, 64, 1), rng, weight_range=(-1.0, 1.0))
    assert p.alpha.min() < 0 < p.alpha.max()
    assert p.beta.min() >= 0.0


def test_hidden_zero_input_gives_bias(params):
    h = hidden(params, np.zeros((3, 5)))
    np.testing.assert_array_equal(h, np.repeat(params.bias, 3, axis=0))


def test_hidden_relu_zeroes_negative(params):
    x = np.full((1, 5), -100.0)
    assert np.all(hidden(params, x) == 0.0)


def test_hidden_matches_scalar_loop(params, rng):
    x = rng.normal(size=(7, 5))
    expected = oracles.scalar_hidden(x.tolist(), params.alpha.tolist(), params.bias.tolist())
    np.testing.assert_allclose(hidden(params, x), expected, atol=1e-12, rtol=0)


def test_hidden_shape_error(params):
    with pytest.raises(ShapeError):
        hidden(params, np.zeros((1, 4)))


def test_predict_zero_beta(params):
    p = params.with_beta(np.zeros_like(params.beta))
    assert np.all(elm_predict(p, np.ones((4, 5))) == 0.0)


def test_predict_batch_consistency(params, rng):
    x = rng.normal(size=(2, 5))
    both = elm_predict(params, x)
    assert elm_predict(params, x[1:2])[0, 0] == both[1, 0]


def test_predict_matches_composition(params, rng):
    x = rng.normal(size=(4, 5))
    h = oracles.scalar_hidden(x.tolist(), params.alpha.tolist(), params.bias.tolist())
    expected = oracles.naive_matmul(h, params.beta.tolist())
    np.testing.assert_allclose(elm_predict(params, x), expected, atol=1e-12, rtol=0)


def test_fit_zero_target(params, rng):
    fit = elm_fit(params, rng.normal(size=(8, 5)), np.zeros((8, 1)), delta=0.5)
    assert np.all(fit.beta == 0.0)


def test_fit_least_squares_residual_matches_exact_oracle(rng):
    p = elm_init(NetworkShape(3, 4, 1), rng, weight_range=(-1.0, 1.0))
    x = rng.normal(size=(8, 3))
    t = rng.normal(size=(8, 1))
    h = hidden(p, x)
    assert np.linalg.matrix_rank(h) == 4
    fit = elm_fit(p, x, t, delta=0.0)
    exact = oracles.exact_ridge(h, t)
    got_res = np.linalg.norm(h @ fit.beta - t)
    want_res = np.linalg.norm(h @ exact - t)
    assert abs(got_res - want_res) <= 1e-8


def test_fit_ridge_shrinks(params, rng):
    x, t = rng.normal(size=(20, 5)), rng.normal(size=(20, 1))
    small = frobenius_norm(elm_fit(params, x, t, delta=1.0).beta)
    large = frobenius_norm(elm_fit(params, x, t, delta=1e6).beta)
    assert large < small


def test_fit_zero_error_on_realizable_target(rng):
    p = elm_init(NetworkShape(4, 6, 2), rng, weight_range=(-1.0, 1.0))
    x = rng.normal(size=(12, 4))
    assert np.linalg.matrix_rank(hidden(p, x)) == 6
    t = hidden(p, x) @ rng.normal(size=(6, 2))
    fit = elm_fit(p, x, t, delta=0.0)
    assert frobenius_norm(hidden(p, x) @ fit.beta - t) <= 1e-6


def test_fit_row_permutation_invariant(params, rng):
    x, t = rng.normal(size=(30, 5)), rng.normal(size=(30, 1))
    perm = rng.permutation(30)
    a = elm_fit(params, x, t, delta=0.5).beta
    b = elm_fit(params, x[perm], t[perm], delta=0.5).beta
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_fit_underdetermined_without_ridge_is_singular(params, rng):
    with pytest.raises(SingularMatrixError):
        elm_fit(params, rng.normal(size=(2, 5)), np.ones((2, 1)), delta=0.0)
