import numpy as np
import pytest
from numpy.testing import assert_allclose

from aircomp.channel import receive
from aircomp.errors import ConfigError
from aircomp.kf_policy import (KalmanState, covariance_step, estimate_sum, kf_cmse, kf_init, kf_update,
                               run_kalman, steady_state_error)
from aircomp.signal_model import GaussMarkovModel, simulate
from aircomp.validation import scalar_riccati_bisection

from conftest import within_se


def test_init_stationary_prior():
    m = GaussMarkovModel.isotropic(0.5, 3)
    st = kf_init(m)
    assert_allclose(st.M, np.eye(3), atol=1e-12)
    assert np.all(st.x_hat == 0) and st.t == 0
    assert kf_cmse(st) == pytest.approx(3.0)


def test_init_scalar():
    st = kf_init(GaussMarkovModel([[0.0]], [[1.0]]))
    assert st.x_hat.tolist() == [0.0] and st.M.tolist() == [[1.0]]


def test_zero_scaling_reverts_to_prior(small_model):
    m = small_model
    st = KalmanState(np.ones(3), 0.1 * np.eye(3))
    for _ in range(400):
        prev = st
        st = kf_update(st, m, np.zeros(3), 1.0, 5.0)
    assert_allclose(st.x_hat, m.A @ prev.x_hat, atol=1e-15)
    assert np.linalg.norm(st.M - m.V_x) <= 1e-8


def test_memoryless_scalar_lmmse():
    v, b, s2 = 0.8, 1.7, 0.6
    m = GaussMarkovModel([[0.0]], [[v]])
    st = kf_update(KalmanState(np.array([3.0]), np.array([[5.0]])), m, [b], s2, 1.0)
    assert st.M[0, 0] == pytest.approx(v * s2 / (s2 + b * b * v), abs=1e-12)
    assert st.x_hat[0] == pytest.approx(b * v / (b * b * v + s2) * 1.0, abs=1e-12)


def test_update_does_not_mutate(small_model):
    st = kf_init(small_model)
    M0 = st.M.copy()
    kf_update(st, small_model, np.ones(3), 1.0, 0.3)
    assert np.array_equal(st.M, M0) and np.all(st.x_hat == 0)


def test_update_symmetric_and_psd(small_model, rng):
    st = kf_init(small_model)
    for _ in range(30):
        st = kf_update(st, small_model, rng.standard_normal(3), 0.5, rng.standard_normal())
        assert np.array_equal(st.M, st.M.T)
        assert np.linalg.eigvalsh(st.M).min() >= -1e-10


def test_update_errors(small_model):
    st = kf_init(small_model)
    with pytest.raises(ConfigError):
        kf_update(st, small_model, np.ones(3), 0.0, 1.0)
    with pytest.raises(ValueError):
        kf_update(st, small_model, np.ones(2), 1.0, 1.0)


def test_estimate_sum():
    assert estimate_sum(KalmanState(np.zeros(3), np.eye(3))) == 0
    assert estimate_sum(KalmanState(np.array([1.0, -1.0, 2.5]), np.eye(3))) == 2.5


def test_kf_cmse_values():
    assert kf_cmse(KalmanState(np.zeros(4), np.eye(4))) == 4.0
    assert kf_cmse(KalmanState(np.zeros(4), np.zeros((4, 4)))) == 0.0


def test_huge_noise_is_pure_prediction(small_model):
    x_prev = np.array([0.5, -1.0, 2.0])
    st = kf_update(KalmanState(x_prev, small_model.V_x), small_model, np.ones(3), 1e12, 7.0)
    pred = np.sum(small_model.A @ x_prev)
    assert abs(estimate_sum(st) - pred) <= 1e-6 * abs(pred)


def test_gain_identity(small_model, rng):
    b = rng.standard_normal(3)
    M_pred, gain, M_post = covariance_step(small_model.V_x, small_model, b, 0.7)
    ref = M_pred - np.outer(M_pred @ b / (0.7 + b @ M_pred @ b), b) @ M_pred
    assert_allclose(M_post, 0.5 * (ref + ref.T), atol=1e-12)
    assert_allclose(gain, M_pred @ b / (0.7 + b @ M_pred @ b), atol=1e-15)


def test_information_never_hurts(small_model, rng):
    st = kf_init(small_model)
    for _ in range(10):
        b = rng.standard_normal(3)
        with_b = kf_update(st, small_model, b, 1.0, 0.0)
        without = kf_update(st, small_model, np.zeros(3), 1.0, 0.0)
        assert kf_cmse(with_b) <= kf_cmse(without) + 1e-10
        st = with_b


def test_steady_state_zero_scaling(small_model):
    assert np.linalg.norm(steady_state_error(small_model, np.zeros(3), 1.0) - small_model.V_x) <= 1e-8


def test_steady_state_scalar_bisection():
    m = GaussMarkovModel([[0.9]], [[0.19]])
    assert steady_state_error(m, [1.0], 1.0)[0, 0] == pytest.approx(
        scalar_riccati_bisection(0.9, 0.19, 1.0, 1.0), abs=1e-10)


def test_steady_state_sandwich(small_model, rng):
    M = steady_state_error(small_model, rng.standard_normal(3), 0.4)
    assert np.linalg.eigvalsh(M).min() >= -1e-12
    assert np.linalg.eigvalsh(small_model.V_x - M).min() >= -1e-8


def test_monte_carlo_at_fixed_time(small_model, rng):
    m, b, s2, n = small_model, np.array([1.0, -0.5, 0.8]), 0.5, 100_000
    xs = simulate(m, 6, rng, n_paths=n)
    st = kf_init(m, n)
    for t in range(7):
        st = kf_update(st, m, b, s2, receive(b, xs[t], s2, rng))
        if t in (0, 3, 6):
            assert within_se((estimate_sum(st) - xs[t].sum(axis=1)) ** 2, kf_cmse(st))


def test_perturbed_estimate_is_worse(small_model, rng):
    m, b, s2, n = small_model, np.array([1.0, -0.5, 0.8]), 0.5, 10_000
    xs = simulate(m, 4, rng, n_paths=n)
    st = kf_init(m, n)
    for t in range(5):
        st = kf_update(st, m, b, s2, receive(b, xs[t], s2, rng))
    err = estimate_sum(st) - xs[-1].sum(axis=1)
    for delta in (0.5, -0.5, 1.0):
        diff = (err + delta) ** 2 - err**2
        assert diff.mean() - 3 * diff.std(ddof=1) / np.sqrt(n) > 0


def test_run_kalman_matches_updates(small_model, rng):
    b, s2 = np.array([0.4, 1.0, -0.3]), 0.8
    y = rng.standard_normal(40)
    chi, cmse = run_kalman(small_model, b, s2, y)
    st = kf_init(small_model)
    for t in range(40):
        st = kf_update(st, small_model, b, s2, y[t])
        assert chi[t] == pytest.approx(float(estimate_sum(st)), rel=1e-9, abs=1e-12)
        assert cmse[t] == pytest.approx(kf_cmse(st), rel=1e-9)
