"""Kalman-filter fusion policy: estimate every sensor signal, then sum.

Given the effective scaling ``b``, the conditional mean of ``x[t]`` from all
received samples is produced by a scalar-observation Kalman filter, and the
minimum computation MSE of the sum is ``1^T M[t] 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError
from .signal_model import GaussMarkovModel

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 1_000_000


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Posterior mean and error covariance after ``t`` observations.

    ``x_hat`` has shape ``(K,)`` or ``(n_paths, K)``; the covariance does not
    depend on the observed values so a single ``M`` serves all paths.
    """

    x_hat: np.ndarray
    M: np.ndarray
    t: int = 0


def _check_b(model: GaussMarkovModel, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (model.dim,):
        raise ValueError(f"b has shape {b.shape}, model dimension is {model.dim}")
    return b


def _check_noise(sigma_z2: float) -> None:
    if not sigma_z2 > 0:
        raise ConfigError(f"receiver noise variance must be positive, got {sigma_z2}")


def covariance_step(M: np.ndarray, model: GaussMarkovModel, b: np.ndarray, sigma_z2: float):
    """One Riccati step. Returns ``(M_pred, gain, M_post)``."""
    A = model.A
    M_pred = A @ M @ A.T + model.V_w
    Mb = M_pred @ b
    gain = Mb / (sigma_z2 + b @ Mb)
    M_post = M_pred - np.outer(gain, b) @ M_pred
    M_post = 0.5 * (M_post + M_post.T)
    return M_pred, gain, M_post


def kf_init(model: GaussMarkovModel, n_paths: int | None = None) -> KalmanState:
    """Stationary prior: zero mean, covariance ``V_x``, no observations yet."""
    shape = (model.dim,) if n_paths is None else (n_paths, model.dim)
    return KalmanState(np.zeros(shape), np.array(model.V_x), 0)


def kf_update(state: KalmanState, model: GaussMarkovModel, b, sigma_z2: float, y) -> KalmanState:
    """Prediction, gain, correction and covariance update for one sample.

    The input state is not modified.
    """
    _check_noise(sigma_z2)
    b = _check_b(model, b)
    x_hat = np.asarray(state.x_hat, dtype=float)
    if x_hat.shape[-1] != model.dim:
        raise ValueError("state dimension does not match model")
    _, gain, M = covariance_step(state.M, model, b, sigma_z2)
    x_pred = x_hat @ model.A.T
    innov = np.asarray(y, dtype=float) - x_pred @ b
    x_new = x_pred + np.multiply.outer(innov, gain)
    M = _clip_psd(M)
    return KalmanState(x_new, M, state.t + 1)


def _clip_psd(M: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(M)
    if evals.min() >= 0.0:
        return M
    if evals.min() < -1e-10 * (1.0 + np.abs(evals).max()):
        raise ConvergenceError(f"error covariance lost positive semidefiniteness ({evals.min():.3e})")
    M = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
    return 0.5 * (M + M.T)


def estimate_sum(state: KalmanState):
    """Fusion output ``chi = 1^T x_hat`` (one value per path)."""
    return np.sum(state.x_hat, axis=-1)


def kf_cmse(state: KalmanState) -> float:
    """Minimum computation MSE ``1^T M 1``."""
    return max(float(np.sum(state.M)), 0.0)


def steady_state_error(model: GaussMarkovModel, b, sigma_z2: float,
                       tol: float = RICCATI_TOL, max_iter: int = RICCATI_MAX_ITER) -> np.ndarray:
    """Fixed point of the posterior covariance recursion for a constant ``b``.

    Iterates from the stationary prior ``V_x`` until successive posteriors
    differ by at most ``tol`` in Frobenius norm (scaled by ``||V_x||_F`` when
    that exceeds one, so the test stays above rounding level).
    """
    _check_noise(sigma_z2)
    b = _check_b(model, b)
    M = np.array(model.V_x)
    thresh = tol * max(1.0, float(np.linalg.norm(M)))
    for _ in range(max_iter):
        _, _, M_next = covariance_step(M, model, b, sigma_z2)
        if np.linalg.norm(M_next - M) <= thresh:
            return M_next
        M = M_next
    raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps")


def run_kalman(model: GaussMarkovModel, b, sigma_z2: float, y):
    """Filter a whole received sequence; returns ``(chi, cmse)`` per step.

    Same recursion as repeated :func:`kf_update` from :func:`kf_init`, but the
    gain is frozen once the covariance stops changing (to rounding level),
    which makes long Monte Carlo runs cheap. ``y`` has shape ``(T,)`` or
    ``(T, n_paths)``.
    """
    _check_noise(sigma_z2)
    b = _check_b(model, b)
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    x = np.zeros((*y.shape[1:], model.dim))
    M = np.array(model.V_x)
    At = model.A.T
    chi = np.empty(y.shape)
    cmse = np.empty(T)
    frozen = False
    gain = None
    for t in range(T):
        if not frozen:
            _, gain, M_next = covariance_step(M, model, b, sigma_z2)
            frozen = np.linalg.norm(M_next - M) <= 1e-15 * (1.0 + np.linalg.norm(M))
            M = M_next
        x_pred = x @ At
        x = x_pred + np.multiply.outer(y[t] - x_pred @ b, gain)
        chi[t] = x.sum(axis=-1)
        cmse[t] = M.sum()
    return chi, cmse
