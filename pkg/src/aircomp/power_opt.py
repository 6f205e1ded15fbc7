"""Power-constrained Tx scaling for a fixed window filter, and the joint
alternating design of filter and scaling.

For fixed taps ``g`` the window CMSE is a convex quadratic in the effective
scaling ``b``::

    f(b) = b^T Q b - 2 b^T r + const

and the average-power limit of sensor ``k`` reads ``b_k^2 <= u_k``. The
feasible set is a box, so the problem is solved by projected gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, NumericalError
from .filter_policy import closed_form_cmse, optimal_filter
from .signal_model import GaussMarkovModel

POWER_BOUNDS = ("with_h2", "paper_eq28")
QCQP_TOL = 1e-10
QCQP_MAX_ITER = 1_000_000
ALTMIN_ROUNDS = 50
ALTMIN_REL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class QcqpProblem:
    Q: np.ndarray
    r: np.ndarray
    const: float
    bound: np.ndarray
    unbounded: np.ndarray = field(default=None)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        r = np.asarray(self.r, dtype=float)
        u = np.asarray(self.bound, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or r.shape != (Q.shape[0],) or u.shape != r.shape:
            raise ValueError("inconsistent QCQP dimensions")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(r)) and np.isfinite(self.const)):
            raise ConfigError("QCQP data must be finite")
        if np.any(np.isnan(u)) or np.any(u <= 0):
            raise ConfigError("power bounds must be positive")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "bound", u)
        object.__setattr__(self, "unbounded", ~np.isfinite(u))

    @property
    def dim(self) -> int:
        return self.r.size

    def objective(self, b) -> float:
        b = np.asarray(b, dtype=float)
        return float(b @ self.Q @ b - 2.0 * b @ self.r + self.const)

    def gradient(self, b) -> np.ndarray:
        return 2.0 * (self.Q @ b - self.r)

    def project(self, b) -> np.ndarray:
        s = box_radius(self.bound)
        return np.clip(b, -s, s)


def box_radius(u) -> np.ndarray:
    """Largest ``s`` with ``s * s <= u`` in floating point."""
    s = np.sqrt(np.asarray(u, dtype=float))
    return np.where(s * s > u, np.nextafter(s, 0.0), s)


def power_bounds(model: GaussMarkovModel, h, P, rule: str = "with_h2") -> np.ndarray:
    """Per-sensor limits ``u_k`` on the effective scaling, ``b_k^2 <= u_k``.

    ``with_h2`` uses ``h_k^2 P_k / Vx_kk`` (average transmit power of
    ``(b_k / h_k) x_k`` at most ``P_k``); ``paper_eq28`` drops the ``h_k^2``.
    Sensors with zero signal variance get ``inf`` (unconstrained).
    """
    if rule not in POWER_BOUNDS:
        raise ConfigError(f"power_bound must be one of {POWER_BOUNDS}, got {rule!r}")
    h = np.asarray(h, dtype=float)
    P = np.broadcast_to(np.asarray(P, dtype=float), h.shape)
    var = np.diag(model.V_x)
    num = h**2 * P if rule == "with_h2" else np.array(P, dtype=float)
    with np.errstate(divide="ignore"):
        u = np.where(var > 0, num / np.where(var > 0, var, 1.0), np.inf)
    return u


def full_power_scaling(model: GaussMarkovModel, h, P, rule: str = "with_h2") -> np.ndarray:
    """Every sensor at its power limit: ``b_k = sqrt(u_k)`` (finite bounds only)."""
    u = power_bounds(model, h, P, rule)
    b = box_radius(u)
    b[~np.isfinite(b)] = 0.0
    if rule == "with_h2":
        b = np.where(np.asarray(h, dtype=float) < 0, -b, b)
    return b


def build_qcqp(model: GaussMarkovModel, g, sigma_z2: float, l: int, h, P,
               rule: str = "with_h2") -> QcqpProblem:
    """Quadratic form of the window CMSE in ``b`` for fixed taps ``g``.

    With ``T_u = sum_{j=u}^{l} g_j A^(j-u)`` the double sums collapse to

        Q = T_0 V_x T_0^T + sum_{u=1}^{l} T_u V_w T_u^T
        r = T_0 V_x (A^l)^T 1 + sum_{u=1}^{l} T_u V_w (A^(l-u))^T 1
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (l + 1,):
        raise ValueError(f"filter has shape {g.shape}, expected ({l + 1},)")
    if not sigma_z2 > 0:
        raise ConfigError(f"receiver noise variance must be positive, got {sigma_z2}")
    K = model.dim
    P_pow = model.powers(l)
    ones = np.ones(K)
    Vx, Vw = model.V_x, model.V_w

    # T_u = g_u I + T_{u+1} A, built from the newest tap backwards
    T = [None] * (l + 1)
    T[l] = g[l] * np.eye(K)
    for u in range(l - 1, -1, -1):
        T[u] = g[u] * np.eye(K) + T[u + 1] @ model.A

    tail = P_pow[l].T @ ones
    Q = T[0] @ Vx @ T[0].T
    r = T[0] @ Vx @ tail
    const = tail @ Vx @ tail + sigma_z2 * (g @ g)
    for u in range(1, l + 1):
        v = P_pow[l - u].T @ ones
        Q += T[u] @ Vw @ T[u].T
        r += T[u] @ Vw @ v
        const += v @ Vw @ v
    u_bound = power_bounds(model, h, P, rule)
    return QcqpProblem(Q=Q, r=r, const=float(const), bound=u_bound)


def power_iteration(S: np.ndarray, tol: float = 1e-9, max_iter: int = 1000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = S.shape[0]
    if not np.any(S):
        return 0.0
    v = np.random.default_rng(0).standard_normal(n)  # fixed start for reproducibility
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return lam
        lam_next = float(v @ w)
        v = w / nw
        if abs(lam_next - lam) <= tol * abs(lam_next):
            return lam_next
        lam = lam_next
    # slow separation of the top two eigenvalues; fall back to a direct solver
    return float(np.linalg.eigvalsh(S)[-1])


def projected_gradient_norm(problem: QcqpProblem, b, L: float) -> float:
    """Norm of the gradient mapping ``L (b - proj(b - grad / L))``."""
    grad = problem.gradient(b)
    return float(L * np.linalg.norm(b - problem.project(b - grad / L)))


def solve_qcqp(problem: QcqpProblem, tol: float = QCQP_TOL, x0=None,
               max_iter: int = QCQP_MAX_ITER) -> np.ndarray:
    """Minimise ``b^T Q b - 2 b^T r`` over the box ``b_k^2 <= u_k``.

    Projected gradient with step ``1/L``, ``L = 1.1 * lambda_max(2Q)``. Stops
    when the gradient-mapping norm is at most ``tol * (1 + ||grad||)``.
    """
    u = problem.bound
    lam = power_iteration(2.0 * problem.Q)
    if lam <= 0.0:
        # linear objective: push each coordinate to the bound favouring r
        if np.any(problem.unbounded & (problem.r != 0)):
            raise NumericalError("objective is unbounded below on an unconstrained coordinate")
        b = np.where(problem.unbounded, 0.0, np.sign(problem.r) * box_radius(np.where(problem.unbounded, 0, u)))
        return b
    L = 1.1 * lam
    Q2, r2 = 2.0 * problem.Q, 2.0 * problem.r
    s = box_radius(u)
    b = np.clip(np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=float), -s, s)
    for _ in range(max_iter):
        grad = Q2 @ b - r2
        b_next = np.clip(b - grad / L, -s, s)
        d = b_next - b
        dd = d @ d
        if not np.isfinite(dd):
            raise NumericalError("projected gradient diverged")
        if L * np.sqrt(dd) <= tol * (1.0 + np.sqrt(grad @ grad)):
            return b_next
        b = b_next
    raise ConvergenceError(f"projected gradient did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    cmse_after_g: float
    cmse_after_b: float


@dataclass(frozen=True, eq=False)
class AltMinTrace:
    records: list
    g: np.ndarray
    b: np.ndarray
    initial_cmse: float = float("nan")

    @property
    def final_cmse(self) -> float:
        return self.records[-1].cmse_after_b

    def cmse_sequence(self) -> np.ndarray:
        """Interleaved CMSE values after each half-step."""
        return np.array([c for rec in self.records for c in (rec.cmse_after_g, rec.cmse_after_b)])

    def rounds_to_converge(self, rel_tol: float) -> int | None:
        """First round whose CMSE differs from the previous round by less than ``rel_tol``."""
        prev = None
        for rec in self.records:
            if prev is not None and abs(rec.cmse_after_b - prev) <= rel_tol * abs(prev):
                return rec.round
            prev = rec.cmse_after_b
        return None


def alternating_minimization(model: GaussMarkovModel, h, P, sigma_z2: float, l: int,
                             rounds: int = ALTMIN_ROUNDS, init=None, rule: str = "with_h2",
                             tol: float = QCQP_TOL, rel_tol: float = ALTMIN_REL_TOL) -> AltMinTrace:
    """Alternate the closed-form filter and the box-QCQP scaling.

    Starts from full power unless ``init`` is given (it is projected onto the
    feasible box). Stops after ``rounds`` or once the CMSE changes by less
    than ``rel_tol`` relative between rounds.
    """
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    h = np.asarray(h, dtype=float)
    if h.shape != (model.dim,):
        raise ValueError(f"h has shape {h.shape}, model dimension is {model.dim}")
    u = power_bounds(model, h, P, rule)
    if init is None:
        b = full_power_scaling(model, h, P, rule)
    else:
        b = np.clip(np.asarray(init, dtype=float), -box_radius(u), box_radius(u))
    g = np.zeros(l + 1)
    initial = closed_form_cmse(model, b, g, sigma_z2, l)

    records = []
    prev = None
    for k in range(1, rounds + 1):
        design = optimal_filter(model, b, sigma_z2, l)
        g, c_g = design.g, design.cmse
        problem = build_qcqp(model, g, sigma_z2, l, h, P, rule)
        b = solve_qcqp(problem, tol=tol, x0=b)
        # the quadratic form equals the window CMSE for this g
        c_b = max(problem.objective(b), 0.0)
        records.append(RoundRecord(k, c_g, c_b))
        if prev is not None and abs(prev - c_b) < rel_tol * abs(prev):
            break
        prev = c_b
    return AltMinTrace(records=records, g=np.array(g), b=np.array(b), initial_cmse=initial)
