import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose, assert_array_equal

from aircomp.errors import ConfigError, InstabilityError
from aircomp.signal_model import (GaussMarkovModel, SignalState, sample_stationary, simulate,
                                  solve_lyapunov, spectral_radius, step)

from conftest import within_se


def test_spectral_radius_scalar():
    assert spectral_radius([[0.9]]) == pytest.approx(0.9)


def test_spectral_radius_isotropic():
    assert spectral_radius(0.99 * np.eye(20)) == pytest.approx(0.99)


def test_spectral_radius_matches_quadratic_roots():
    A = np.array([[0.5, 0.2], [0.1, 0.4]])
    tr, det = np.trace(A), np.linalg.det(A)
    disc = np.sqrt(complex(tr * tr - 4 * det))
    roots = [(tr + disc) / 2, (tr - disc) / 2]
    assert spectral_radius(A) == pytest.approx(max(abs(r) for r in roots), abs=1e-14)


def test_spectral_radius_rejects_bad_input():
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))
    with pytest.raises(ValueError):
        spectral_radius([[np.nan]])


def test_lyapunov_isotropic_unit_covariance():
    a = 0.9
    V = solve_lyapunov(a * np.eye(4), (1 - a * a) * np.eye(4))
    assert_allclose(V, np.eye(4), atol=1e-10)


def test_lyapunov_memoryless():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert_allclose(solve_lyapunov(np.zeros((2, 2)), S), S, atol=1e-15)


def test_lyapunov_scalar_geometric_series():
    assert solve_lyapunov([[0.9]], [[0.19]])[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_lyapunov_matches_scipy(rng):
    for _ in range(10):
        K = rng.integers(1, 8)
        A = rng.standard_normal((K, K))
        A *= 0.9 / spectral_radius(A)
        B = rng.standard_normal((K, K))
        Vw = B @ B.T
        ref = scipy.linalg.solve_discrete_lyapunov(A, Vw)
        assert_allclose(solve_lyapunov(A, Vw), ref, rtol=1e-9, atol=1e-10)


def test_lyapunov_unstable_raises():
    with pytest.raises(InstabilityError):
        solve_lyapunov([[1.0]], [[1.0]])
    with pytest.raises(InstabilityError):
        GaussMarkovModel(np.array([[0.5, 2.0], [0.0, 1.01]]), np.eye(2))


def test_non_psd_noise_rejected():
    with pytest.raises(ConfigError):
        GaussMarkovModel(0.5 * np.eye(2), np.array([[1.0, 0.0], [0.0, -0.1]]))
    with pytest.raises(ConfigError):
        GaussMarkovModel(0.5 * np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_tiny_negative_eigenvalue_clipped():
    V = np.diag([1.0, -1e-13])
    m = GaussMarkovModel(0.5 * np.eye(2), V)
    assert np.linalg.eigvalsh(m.V_w).min() >= 0.0


def test_model_is_immutable(small_model):
    with pytest.raises(ValueError):
        small_model.A[0, 0] = 3.0
    with pytest.raises(AttributeError):
        small_model.A = np.eye(3)


def test_residual_small(small_model):
    assert small_model.residual() <= 1e-10 * (1 + np.linalg.norm(small_model.V_w))


def test_stationarity_closure(small_model):
    m = small_model
    assert_allclose(m.A @ m.V_x @ m.A.T + m.V_w, m.V_x, atol=1e-10)


def test_with_unit_covariance():
    A = np.array([[0.5, 0.2], [0.1, 0.4]])
    m = GaussMarkovModel.with_unit_covariance(A)
    assert_allclose(m.V_x, np.eye(2), atol=1e-10)


def test_powers_cached(small_model):
    P = small_model.powers(4)
    assert_allclose(P[3], np.linalg.matrix_power(small_model.A, 3), atol=1e-14)
    assert small_model.powers(2)[2] is P[2]


def test_step_noiseless():
    m = GaussMarkovModel(np.array([[0.5, 0.1], [0.0, 0.3]]), np.zeros((2, 2)))
    v = np.array([1.0, -2.0])
    out = step(m, SignalState(3, v), np.random.default_rng(0))
    assert out.t == 4
    assert_array_equal(out.x, m.A @ v)


def test_step_dimension_mismatch(small_model, rng):
    with pytest.raises(ValueError):
        step(small_model, SignalState(0, np.zeros(2)), rng)


def test_signal_state_validation():
    with pytest.raises(ValueError):
        SignalState(-1, np.zeros(2))
    with pytest.raises(ValueError):
        SignalState(0, np.array([np.inf]))


def _cov_within_se(X, target, k=3.0):
    n = X.shape[0]
    prod = X[:, :, None] * X[:, None, :]
    se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    return np.all(np.abs(prod.mean(axis=0) - target) <= k * se)


def test_white_noise_covariance(rng):
    m = GaussMarkovModel(np.zeros((3, 3)), np.eye(3))
    xs = simulate(m, 100_000, rng)[1:]
    assert _cov_within_se(xs, np.eye(3))


def test_lag_one_autocovariance(rng):
    a = 0.7
    m = GaussMarkovModel.isotropic(a, 2)
    xs = simulate(m, 100_000, rng)[:, 0]
    assert within_se(xs[1:] * xs[:-1], a, k=4.0)  # adjacent products are correlated; a wider band


def test_stationary_draws_covariance(rng):
    m = GaussMarkovModel.isotropic(0.9, 3)
    X = m.sample_stationary_array(rng, 100_000)
    assert _cov_within_se(X, np.eye(3))


def test_stationary_zero_mean_scalar(rng):
    m = GaussMarkovModel([[0.5]], [[0.75]])
    assert within_se(m.sample_stationary_array(rng, 100_000)[:, 0], 0.0)


def test_degenerate_coordinate_is_zero(rng):
    m = GaussMarkovModel(np.diag([0.5, 0.5]), np.diag([1.0, 0.0]))
    for _ in range(20):
        assert sample_stationary(m, rng).x[1] == 0.0


def test_simulate_deterministic(small_model):
    a = simulate(small_model, 50, np.random.default_rng(5), n_paths=3)
    b = simulate(small_model, 50, np.random.default_rng(5), n_paths=3)
    assert a.shape == (51, 3, 3)
    assert_array_equal(a, b)


def test_simulate_step_agree(small_model):
    # the vectorised path and repeated step() use the same noise draws
    x0 = np.array([1.0, 0.0, -1.0])
    xs = simulate(small_model, 5, np.random.default_rng(1), x0=x0)
    noise = small_model.sample_noise(np.random.default_rng(1), 5)
    x = x0
    for t in range(5):
        x = small_model.A @ x + noise[t]
        assert_allclose(xs[t + 1], x, atol=1e-14)
