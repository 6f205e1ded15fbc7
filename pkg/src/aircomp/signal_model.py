"""Spatially and temporally correlated Gauss-Markov sensor signals.

The sensor vector evolves as ``x[t+1] = A x[t] + w[t]`` with
``w[t] ~ N(0, V_w)``. For a stable ``A`` the process has a stationary
covariance ``V_x`` solving ``A V_x A^T - V_x + V_w = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, InstabilityError

PSD_SLACK = 1e-10
LYAP_TOL = 1e-12
LYAP_MAX_ITER = 1_000_000


def _as_square(A, name: str = "A") -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def spectral_radius(A) -> float:
    """Largest absolute eigenvalue of a square matrix."""
    A = _as_square(A)
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def project_psd(V, name: str = "V_w", slack: float = PSD_SLACK) -> np.ndarray:
    """Validate a (nearly) symmetric PSD matrix and clip tiny negative eigenvalues.

    Raises ConfigError if asymmetry or negative eigenvalues exceed ``slack``
    (relative to the matrix scale).
    """
    V = _as_square(V, name)
    scale = 1.0 + np.linalg.norm(V)
    if np.linalg.norm(V - V.T) > slack * scale:
        raise ConfigError(f"{name} is not symmetric")
    V = 0.5 * (V + V.T)
    evals, evecs = np.linalg.eigh(V)
    if evals.min() < -slack * scale:
        raise ConfigError(f"{name} is not positive semidefinite (min eigenvalue {evals.min():.3e})")
    if evals.min() < 0.0:
        V = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        V = 0.5 * (V + V.T)
    return V


def psd_sqrt(V: np.ndarray) -> np.ndarray:
    """Symmetric square root ``S`` with ``S S^T = V``; works for singular ``V``."""
    evals, evecs = np.linalg.eigh(0.5 * (V + V.T))
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T


def solve_lyapunov(A, V_w, tol: float = LYAP_TOL, max_iter: int = LYAP_MAX_ITER) -> np.ndarray:
    """Stationary covariance of ``x[t+1] = A x[t] + w[t]``.

    Fixed-point iteration ``V <- A V A^T + V_w`` started at ``V_w``. The
    update norm equals the residual of the previous iterate, so the loop
    stops once it drops to ``tol * (1 + ||V_w||_F)``.
    """
    A = _as_square(A)
    V_w = project_psd(V_w)
    if V_w.shape != A.shape:
        raise ValueError(f"V_w shape {V_w.shape} does not match A shape {A.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise InstabilityError(f"spectral radius of A is {rho:.6g} >= 1; process has no steady state")

    thresh = tol * (1.0 + np.linalg.norm(V_w))
    V = V_w.copy()
    for _ in range(max_iter):
        V_next = A @ V @ A.T + V_w
        V_next = 0.5 * (V_next + V_next.T)
        step = np.linalg.norm(V_next - V)
        V = V_next
        if step <= thresh:
            return V
    raise ConvergenceError(f"Lyapunov iteration did not converge in {max_iter} steps (rho={rho:.6g})")


@dataclass(frozen=True)
class SignalState:
    t: int
    x: np.ndarray

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time index must be nonnegative")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("signal state has non-finite entries")


@dataclass(frozen=True, eq=False)
class GaussMarkovModel:
    """Stable linear Gauss-Markov process ``x[t+1] = A x[t] + w[t]``.

    ``V_x`` is derived at construction and the Gaussian square-root factors
    used for sampling are cached. Instances are immutable.
    """

    A: np.ndarray
    V_w: np.ndarray
    V_x: np.ndarray = field(init=False)
    _w_factor: np.ndarray = field(init=False, repr=False)
    _x_factor: np.ndarray = field(init=False, repr=False)
    _powers: list = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        A = _as_square(self.A)
        V_w = project_psd(self.V_w)
        V_x = solve_lyapunov(A, V_w)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "V_w", _frozen(V_w))
        object.__setattr__(self, "V_x", _frozen(V_x))
        object.__setattr__(self, "_w_factor", _frozen(psd_sqrt(V_w)))
        object.__setattr__(self, "_x_factor", _frozen(psd_sqrt(V_x)))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def powers(self, n: int) -> list[np.ndarray]:
        """``[A^0, ..., A^n]`` (cached, read-only)."""
        cache = self._powers
        if not cache:
            cache.append(_frozen(np.eye(self.dim)))
        while len(cache) <= n:
            cache.append(_frozen(cache[-1] @ self.A))
        return cache[: n + 1]

    @classmethod
    def isotropic(cls, alpha: float, K: int) -> "GaussMarkovModel":
        """``A = alpha I`` with ``V_w = (1 - alpha^2) I`` so that ``V_x = I``."""
        if K < 1:
            raise ConfigError("K must be >= 1")
        if abs(alpha) >= 1.0:
            raise InstabilityError(f"alpha={alpha} gives spectral radius >= 1")
        return cls(alpha * np.eye(K), (1.0 - alpha**2) * np.eye(K))

    @classmethod
    def with_unit_covariance(cls, A) -> "GaussMarkovModel":
        """Pick ``V_w = I - A A^T`` so that the stationary covariance is ``I``."""
        A = _as_square(A)
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise InstabilityError(f"spectral radius of A is {rho:.6g} >= 1")
        V_w = np.eye(A.shape[0]) - A @ A.T
        return cls(A, V_w)

    def residual(self) -> float:
        """Frobenius norm of ``A V_x A^T - V_x + V_w``."""
        return float(np.linalg.norm(self.A @ self.V_x @ self.A.T - self.V_x + self.V_w))

    def sample_noise(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (*np.atleast_1d(size), self.dim)
        return rng.standard_normal(shape) @ self._w_factor.T

    def sample_stationary_array(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (*np.atleast_1d(size), self.dim)
        return rng.standard_normal(shape) @ self._x_factor.T


def step(model: GaussMarkovModel, state: SignalState, rng: np.random.Generator) -> SignalState:
    """Advance one step: ``x[t+1] = A x[t] + w[t]``."""
    x = np.asarray(state.x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"state has shape {x.shape}, model dimension is {model.dim}")
    return SignalState(state.t + 1, model.A @ x + model.sample_noise(rng))


def sample_stationary(model: GaussMarkovModel, rng: np.random.Generator) -> SignalState:
    """Draw ``x[0] ~ N(0, V_x)``."""
    return SignalState(0, model.sample_stationary_array(rng))


def simulate(model: GaussMarkovModel, n_steps: int, rng: np.random.Generator,
             n_paths: int | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Trajectory array of shape ``(n_steps + 1, [n_paths,] K)``.

    Starts from a stationary draw unless ``x0`` is given.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    lead = () if n_paths is None else (n_paths,)
    out = np.empty((n_steps + 1, *lead, model.dim))
    out[0] = model.sample_stationary_array(rng, n_paths) if x0 is None else x0
    noise = model.sample_noise(rng, (n_steps, *lead))
    At = model.A.T
    for t in range(n_steps):
        out[t + 1] = out[t] @ At + noise[t]
    return out
