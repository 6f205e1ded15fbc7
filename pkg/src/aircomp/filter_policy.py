"""Low-complexity fusion: a fixed linear filter over the last ``l + 1`` samples.

Window convention (0-based): entry ``i`` of the window is ``y[t-l+i]``, so
entry 0 is the oldest sample and entry ``l`` the newest. Expanding the
process from ``x[t-l]`` gives

    y[t-l+i] = b^T A^i x[t-l] + c_i,
    c_i      = z[t-l+i] + sum_{m=1}^{i} b^T A^(i-m) w[t-l+m-1],
    1^T x[t] = 1^T A^l x[t-l] + sum_{i=1}^{l} 1^T A^(l-i) w[t-l+i-1].

The filter design below uses the covariances of the ``c`` vector
(``V_c``) and its cross-covariances with past process noise (``C_i``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError
from .signal_model import GaussMarkovModel


def matrix_powers(A: np.ndarray, n: int) -> list[np.ndarray]:
    """``[A^0, A^1, ..., A^n]``."""
    out = [np.eye(A.shape[0])]
    for _ in range(n):
        out.append(out[-1] @ A)
    return out


def _check(model: GaussMarkovModel, b, l: int) -> np.ndarray:
    if l < 0 or int(l) != l:
        raise ConfigError(f"window parameter l must be a nonnegative integer, got {l}")
    b = np.asarray(b, dtype=float)
    if b.shape != (model.dim,):
        raise ValueError(f"b has shape {b.shape}, model dimension is {model.dim}")
    return b


def _check_noise(sigma_z2: float) -> None:
    if not sigma_z2 > 0:
        raise ConfigError(f"receiver noise variance must be positive, got {sigma_z2}")


def build_observation_matrix(model: GaussMarkovModel, b, l: int) -> np.ndarray:
    """``(l+1) x K`` matrix whose row ``i`` is ``b^T A^i``."""
    b = _check(model, b, l)
    rows = np.empty((l + 1, model.dim))
    v = b
    for i in range(l + 1):
        rows[i] = v
        v = v @ model.A
    return rows


def _accumulate_noise(W: np.ndarray) -> np.ndarray:
    """``Vt[i, j] = sum_{u=1}^{min(i,j)} W[i-u, j-u]``, zero on row/column 0."""
    n = W.shape[0]
    Vt = np.zeros((n, n))
    for i in range(1, n):
        Vt[i, 1:] = Vt[i - 1, :-1] + W[i - 1, :-1]
    return 0.5 * (Vt + Vt.T)


def build_noise_covariance(model: GaussMarkovModel, b, sigma_z2: float, l: int) -> np.ndarray:
    """``V_c = sigma_z2 I + Vt`` with ``Vt[i, j] = b^T U_{i,j} b``.

    ``U_{i,j} = sum_{u=1}^{min(i,j)} A^(i-u) V_w (A^(j-u))^T``, and row/column 0
    of ``Vt`` vanish. With ``R`` the observation matrix this is a running sum
    along diagonals of ``W = R V_w R^T``: ``Vt[i, j] = Vt[i-1, j-1] + W[i-1, j-1]``.
    """
    _check_noise(sigma_z2)
    R = build_observation_matrix(model, b, l)
    return sigma_z2 * np.eye(l + 1) + _accumulate_noise(R @ model.V_w @ R.T)


def build_cross_covariance(model: GaussMarkovModel, b, l: int, i: int) -> np.ndarray:
    """``C_i = E[c w[t-i]^T]``: ``l+1-i`` zero rows, then ``b^T A^k V_w``, k = 0..i-1."""
    b = _check(model, b, l)
    if not 1 <= i <= l:
        raise ConfigError(f"cross-covariance index must be in 1..{l}, got {i}")
    C = np.zeros((l + 1, model.dim))
    R = build_observation_matrix(model, b, i - 1)
    C[l + 1 - i:] = R @ model.V_w
    return C


@dataclass(frozen=True, eq=False)
class _WindowStats:
    """Second-order statistics of a length-``l+1`` window for one ``b``."""

    M_obs: np.ndarray
    V_c: np.ndarray
    RVw: np.ndarray     # rows b^T A^k V_w, k = 0..l
    tails: np.ndarray   # row i is (A^(l-i))^T 1, i = 0..l

    def cross(self, i: int) -> np.ndarray:
        l = self.M_obs.shape[0] - 1
        C = np.zeros_like(self.M_obs)
        C[l + 1 - i:] = self.RVw[:i]
        return C

    def cross_term(self, g: np.ndarray) -> float:
        """``sum_{i=1}^{l} g^T C_{l+1-i} (A^(l-i))^T 1``."""
        l = self.M_obs.shape[0] - 1
        total = 0.0
        for i in range(1, l + 1):
            # C_{l+1-i} has its nonzero rows i..l equal to RVw[0..l-i]
            total += g[i:] @ (self.RVw[: l + 1 - i] @ self.tails[i])
        return total

    def cross_vector(self) -> np.ndarray:
        """``sum_{i=1}^{l} C_{l+1-i} (A^(l-i))^T 1``."""
        l = self.M_obs.shape[0] - 1
        out = np.zeros(l + 1)
        for i in range(1, l + 1):
            out[i:] += self.RVw[: l + 1 - i] @ self.tails[i]
        return out


def _window_stats(model: GaussMarkovModel, b, sigma_z2: float, l: int) -> _WindowStats:
    _check_noise(sigma_z2)
    R = build_observation_matrix(model, b, l)
    RVw = R @ model.V_w
    V_c = sigma_z2 * np.eye(l + 1) + _accumulate_noise(RVw @ R.T)
    ones = np.ones(model.dim)
    P = model.powers(l)
    tails = np.array([P[l - i].T @ ones for i in range(l + 1)])
    return _WindowStats(M_obs=R, V_c=V_c, RVw=RVw, tails=tails)


@dataclass(frozen=True, eq=False)
class ReceivedWindow:
    """The ``l + 1`` most recent received samples, oldest first."""

    y: np.ndarray
    t: int

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.t < y.size - 1:
            raise ValueError(f"window of length {y.size} needs t >= {y.size - 1}, got t={self.t}")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True, eq=False)
class FilterDesign:
    l: int
    g: np.ndarray
    M_obs: np.ndarray
    V_c: np.ndarray
    C: tuple
    cmse: float

    @property
    def length(self) -> int:
        return self.l + 1


def _normal_equations(model: GaussMarkovModel, stats: _WindowStats):
    """Gram matrix ``M V_x M^T + V_c`` and right-hand side of the filter design."""
    M_obs, Vx = stats.M_obs, model.V_x
    H = M_obs @ Vx @ M_obs.T + stats.V_c
    rhs = M_obs @ (Vx @ stats.tails[0]) + stats.cross_vector()
    return 0.5 * (H + H.T), rhs


def stationarity_residual(model: GaussMarkovModel, b, g, sigma_z2: float, l: int) -> np.ndarray:
    """Gradient of the window CMSE with respect to ``g`` (zero at the optimum).

    Written term by term from the expanded quadratic, independent of the
    solver's Gram-matrix assembly.
    """
    g = np.asarray(g, dtype=float)
    M_obs = build_observation_matrix(model, b, l)
    V_c = build_noise_covariance(model, b, sigma_z2, l)
    P = matrix_powers(model.A, l)
    ones = np.ones(model.dim)
    Vx = model.V_x
    grad = 2.0 * g @ M_obs @ Vx @ M_obs.T
    # the two cross terms g^T M V_x (A^l)^T 1 and 1^T A^l V_x M^T g
    grad -= ones @ P[l] @ Vx.T @ M_obs.T
    grad -= ones @ P[l] @ Vx @ M_obs.T
    grad += 2.0 * g @ V_c
    for i in range(1, l + 1):
        Ci = build_cross_covariance(model, b, l, l + 1 - i)
        grad -= 2.0 * (ones @ P[l - i] @ Ci.T)
    return grad


def _cmse_from_stats(model: GaussMarkovModel, stats: _WindowStats, g: np.ndarray) -> float:
    Vx, Vw = model.V_x, model.V_w
    tail = stats.tails[0]
    gM = g @ stats.M_obs
    val = gM @ Vx @ gM
    val -= gM @ Vx @ tail
    val -= tail @ Vx.T @ gM
    val += tail @ Vx @ tail
    val += g @ stats.V_c @ g
    for v in stats.tails[1:]:
        val += v @ Vw @ v
    val -= 2.0 * stats.cross_term(g)
    if val < -1e-10 * (1.0 + abs(val)):
        raise NumericalError(f"window CMSE evaluated negative ({val:.3e})")
    return max(float(val), 0.0)


def closed_form_cmse(model: GaussMarkovModel, b, g, sigma_z2: float, l: int) -> float:
    """Stationary computation MSE ``E|g^T y - 1^T x[t]|^2`` of a window filter."""
    b = _check(model, b, l)
    g = np.asarray(g, dtype=float)
    if g.shape != (l + 1,):
        raise ValueError(f"filter has shape {g.shape}, expected ({l + 1},)")
    return _cmse_from_stats(model, _window_stats(model, b, sigma_z2, l), g)


def optimal_filter(model: GaussMarkovModel, b, sigma_z2: float, l: int) -> FilterDesign:
    """Closed-form MMSE window filter for a fixed effective scaling ``b``.

    Solves ``(M V_x M^T + V_c) g = M V_x (A^l)^T 1 + sum_i C_{l+1-i} (A^(l-i))^T 1``
    by Cholesky; the Gram matrix is at least ``sigma_z2 I``.
    """
    b = _check(model, b, l)
    stats = _window_stats(model, b, sigma_z2, l)
    H, rhs = _normal_equations(model, stats)
    try:
        g = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"filter normal equations are not positive definite: {exc}") from exc
    res = np.linalg.norm(H @ g - rhs)
    if not np.isfinite(res) or res > 1e-8 * (1.0 + np.linalg.norm(g)) * max(1.0, np.linalg.norm(rhs)):
        raise NumericalError(f"filter normal equations solved inaccurately (residual {res:.3e})")
    cmse = _cmse_from_stats(model, stats, g)
    C = tuple(stats.cross(i) for i in range(1, l + 1))
    for a in (stats.M_obs, stats.V_c, g, *C):
        a.setflags(write=False)
    return FilterDesign(l=l, g=g, M_obs=stats.M_obs, V_c=stats.V_c, C=C, cmse=cmse)


def apply_filter(design: FilterDesign | np.ndarray, window: ReceivedWindow | np.ndarray) -> float:
    """Fusion output ``g^T y`` for one window (oldest sample first)."""
    g = design.g if isinstance(design, FilterDesign) else np.asarray(design, dtype=float)
    y = window.y if isinstance(window, ReceivedWindow) else np.asarray(window, dtype=float)
    if y.shape != g.shape:
        raise ValueError(f"window length {y.shape} does not match filter length {g.shape}")
    return float(g @ y)


def filter_series(g, y) -> np.ndarray:
    """Apply ``g`` to every full window of a received sequence.

    Output element ``k`` corresponds to time ``t = k + l``; earlier times have
    no complete window and are not emitted.
    """
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[0] < g.size:
        return np.empty((0, *y.shape[1:]))
    windows = np.lib.stride_tricks.sliding_window_view(y, g.size, axis=0)
    return windows @ g
