"""Self-validation: every production path checked against an independent oracle.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_suite`
runs them all. The oracles here deliberately avoid the code paths they test:
window statistics are recomputed from the joint covariance of stacked
states, Monte Carlo estimates come from raw simulated trajectories, and the
box QCQP is checked against a dense grid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import receive
from .filter_policy import (build_cross_covariance, build_noise_covariance, closed_form_cmse,
                            optimal_filter, stationarity_residual)
from .kf_policy import estimate_sum, kf_cmse, kf_init, kf_update, steady_state_error
from .power_opt import QcqpProblem, alternating_minimization, build_qcqp, solve_qcqp
from .signal_model import GaussMarkovModel, solve_lyapunov


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name: str, limit: float, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    dt = time.perf_counter() - t0
    if dt > limit:
        passed, detail = False, f"{detail}; took {dt:.1f}s > {limit:.0f}s"
    return CheckResult(name, bool(passed), f"{detail} ({dt:.1f}s)", dt)


def random_model(rng: np.random.Generator, K: int, rho_max: float = 0.95) -> GaussMarkovModel:
    """Random non-symmetric stable ``A`` and full-rank ``V_w``."""
    A = rng.standard_normal((K, K))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.1, rho_max) / rho
    B = rng.standard_normal((K, K))
    V_w = B @ B.T / K + 0.1 * np.eye(K)
    return GaussMarkovModel(A, V_w)


# ---- independent oracles -------------------------------------------------

def joint_state_covariance(model: GaussMarkovModel, l: int) -> np.ndarray:
    """Covariance of the stacked stationary states ``(x[t-l], ..., x[t])``.

    Uses ``Cov(x[s+d], x[s]) = A^d V_x`` and nothing from the window code.
    """
    K = model.dim
    S = np.zeros(((l + 1) * K, (l + 1) * K))
    Ad = np.eye(K)
    lags = []
    for _ in range(l + 1):
        lags.append(Ad @ model.V_x)
        Ad = Ad @ model.A
    for i in range(l + 1):
        for j in range(l + 1):
            blk = lags[i - j] if i >= j else lags[j - i].T
            S[i * K:(i + 1) * K, j * K:(j + 1) * K] = blk
    return S


def window_cmse_oracle(model: GaussMarkovModel, b, g, sigma_z2: float, l: int) -> float:
    """``E|sum_i g_i y[t-l+i] - 1^T x[t]|^2`` from the joint state covariance."""
    K = model.dim
    a = np.concatenate([gi * np.asarray(b, dtype=float) for gi in g])
    a[l * K:] -= 1.0
    return float(a @ joint_state_covariance(model, l) @ a + sigma_z2 * np.dot(g, g))


def window_lmmse_oracle(model: GaussMarkovModel, b, sigma_z2: float, l: int) -> np.ndarray:
    """LMMSE taps from ``Cov(y) g = Cov(y, 1^T x[t])`` built from the joint covariance."""
    K = model.dim
    S = joint_state_covariance(model, l)
    Bm = np.kron(np.eye(l + 1), np.asarray(b, dtype=float)[None, :])
    e = np.zeros((l + 1) * K)
    e[l * K:] = 1.0
    Cyy = Bm @ S @ Bm.T + sigma_z2 * np.eye(l + 1)
    return np.linalg.solve(Cyy, Bm @ S @ e)


def scalar_riccati_bisection(a: float, v_w: float, b: float, sigma_z2: float) -> float:
    """Positive root of ``m = p s / (s + b^2 p)`` with ``p = a^2 m + v_w``."""
    def f(m):
        p = a * a * m + v_w
        return p * sigma_z2 / (sigma_z2 + b * b * p) - m
    lo, hi = 0.0, v_w / max(1e-300, 1 - a * a) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_windows(model: GaussMarkovModel, b, sigma_z2: float, l: int, n: int, rng):
    """``n`` independent stationary windows.

    Returns ``(x, w, y)`` with shapes ``(l+1, n, K)``, ``(l, n, K)`` and
    ``(l+1, n)``; row ``j`` is time ``t-l+j`` and ``w[j] = x[j+1] - A x[j]``.
    """
    K = model.dim
    Lx = np.linalg.cholesky(model.V_x)
    Lw = np.linalg.cholesky(model.V_w)
    x = np.empty((l + 1, n, K))
    x[0] = rng.standard_normal((n, K)) @ Lx.T
    w = rng.standard_normal((l, n, K)) @ Lw.T
    for j in range(l):
        x[j + 1] = x[j] @ model.A.T + w[j]
    y = x @ np.asarray(b, dtype=float) + np.sqrt(sigma_z2) * rng.standard_normal((l + 1, n))
    return x, w, y


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1000 + tag,)))


def _within(est: np.ndarray, se: np.ndarray, target: np.ndarray, k: float = 3.0) -> tuple[bool, float]:
    z = np.abs(est - target) / np.where(se > 0, se, np.inf)
    z = np.where((se == 0) & (est != target), np.inf, z)
    return bool(np.all(z <= k)), float(np.max(z))


# ---- checks ----------------------------------------------------------------

def check_lyapunov(seed: int = 0, n_models: int = 50, K_max: int = 50) -> CheckResult:
    def run():
        rng = _rng(seed, 1)
        worst, worst_ref = 0.0, 0.0
        for k in range(n_models):
            K = int(rng.integers(1, K_max + 1)) if k else K_max
            A = rng.standard_normal((K, K))
            A *= rng.uniform(0.05, 0.97) / np.max(np.abs(np.linalg.eigvals(A)))
            B = rng.standard_normal((K, K))
            V_w = B @ B.T
            V = solve_lyapunov(A, V_w)
            res = np.linalg.norm(A @ V @ A.T - V + V_w) / (1.0 + np.linalg.norm(V_w))
            ref = scipy.linalg.solve_discrete_lyapunov(A, V_w)
            worst = max(worst, res)
            worst_ref = max(worst_ref, np.linalg.norm(V - ref) / (1.0 + np.linalg.norm(ref)))
        return worst <= 1e-10, f"max scaled residual {worst:.2e}, max rel. gap to Bartels-Stewart {worst_ref:.2e}"
    return _timed("lyapunov residual", 10, run)


def check_kalman_monte_carlo(seed: int = 0, n_instances: int = 10, n_paths: int = 100_000,
                             times=(1, 5)) -> CheckResult:
    """``1^T M_t 1`` against the empirical error of the filter over independent paths.

    Time ``t`` means the estimate of ``x[t]`` after observing ``y[0..t]``.
    The steady-state point is compared at a time where ``M_t`` has reached
    the Riccati fixed point.
    """
    def run():
        rng = _rng(seed, 2)
        worst_z, ok = 0.0, True
        for _ in range(n_instances):
            K = int(rng.integers(1, 6))
            model = random_model(rng, K, rho_max=0.9)
            b = rng.uniform(0.3, 2.0, K) * rng.choice([-1.0, 1.0], K)
            s2 = float(rng.uniform(0.2, 2.0))
            M_inf = steady_state_error(model, b, s2)
            x = model.sample_stationary_array(rng, n_paths)
            state = kf_init(model, n_paths)
            pending = sorted(times)
            for t in range(10_001):
                if t > 0:
                    x = x @ model.A.T + model.sample_noise(rng, n_paths)
                state = kf_update(state, model, b, s2, receive(b, x, s2, rng))
                steady = np.linalg.norm(state.M - M_inf) <= 1e-12 * max(1.0, np.linalg.norm(M_inf))
                if t in pending or (steady and not pending):
                    e2 = (estimate_sum(state) - x.sum(axis=1)) ** 2
                    target = kf_cmse(state) if pending else float(np.sum(M_inf))
                    good, z = _within(e2.mean(), e2.std(ddof=1) / np.sqrt(n_paths), target)
                    ok &= good
                    worst_z = max(worst_z, z)
                    if not pending:
                        break
                    pending.remove(t)
            else:
                return False, "Riccati recursion did not reach its fixed point"
        return ok, f"max |z| = {worst_z:.2f} over {n_instances} instances at t in {list(times)} and steady state"
    return _timed("kalman CMSE vs Monte Carlo", 120, run)


def check_filter_optimality(seed: int = 0, n_instances: int = 20, n_perturb: int = 100) -> CheckResult:
    def run():
        rng = _rng(seed, 3)
        worst_res, worst_drop, worst_oracle = 0.0, -np.inf, 0.0
        for _ in range(n_instances):
            K, l = int(rng.integers(1, 6)), int(rng.integers(0, 6))
            model = random_model(rng, K)
            b = rng.uniform(-2, 2, K)
            s2 = float(rng.uniform(0.1, 2.0))
            d = optimal_filter(model, b, s2, l)
            worst_res = max(worst_res, np.linalg.norm(stationarity_residual(model, b, d.g, s2, l)))
            g_ref = window_lmmse_oracle(model, b, s2, l)
            worst_oracle = max(worst_oracle, np.linalg.norm(d.g - g_ref) / (1 + np.linalg.norm(g_ref)))
            for _ in range(n_perturb // n_instances):
                delta = rng.standard_normal(l + 1)
                delta *= 10.0 ** rng.uniform(-3, 0) / np.linalg.norm(delta)
                worst_drop = max(worst_drop, d.cmse - closed_form_cmse(model, b, d.g + delta, s2, l))
        scalar_gap = 0.0
        for _ in range(20):
            a, bb, s2 = rng.uniform(-0.95, 0.95), rng.uniform(-3, 3), rng.uniform(0.1, 3)
            m = GaussMarkovModel([[a]], [[rng.uniform(0.1, 2)]])
            vx = float(m.V_x[0, 0])
            g = optimal_filter(m, [bb], s2, 0).g[0]
            scalar_gap = max(scalar_gap, abs(g - bb * vx / (bb * bb * vx + s2)))
        ok = worst_res <= 1e-8 and worst_drop <= 1e-12 and scalar_gap <= 1e-12 and worst_oracle <= 1e-9
        return ok, (f"residual {worst_res:.1e}, max CMSE drop under perturbation {worst_drop:.1e}, "
                    f"scalar gap {scalar_gap:.1e}, gap to joint-covariance LMMSE {worst_oracle:.1e}")
    return _timed("window filter optimality", 30, run)


def check_window_covariances(seed: int = 0, n: int = 100_000, K: int = 3, l: int = 3) -> CheckResult:
    """``V_c`` and ``C_i`` against raw simulated windows, ``c = y - M x[t-l]``."""
    def run():
        rng = _rng(seed, 4)
        model = random_model(rng, K, rho_max=0.9)
        b = rng.uniform(0.5, 1.5, K)
        s2 = 0.5
        x, w, y = simulate_windows(model, b, s2, l, n, rng)
        # c from its definition: what is left of the window after removing x[t-l]
        M = np.array([b @ np.linalg.matrix_power(model.A, i) for i in range(l + 1)])
        c = y - (x[0] @ M.T).T
        prod = c[:, None, :] * c[None, :, :]
        ok, worst = _within(prod.mean(-1), prod.std(-1, ddof=1) / np.sqrt(n),
                            build_noise_covariance(model, b, s2, l))
        for i in range(1, l + 1):
            wi = w[l - i]  # w[t-i]
            prod = np.einsum("jn,nk->jkn", c, wi)
            good, z = _within(prod.mean(-1), prod.std(-1, ddof=1) / np.sqrt(n),
                              build_cross_covariance(model, b, l, i))
            ok &= good
            worst = max(worst, z)
        return ok, f"max |z| = {worst:.2f} over V_c and C_1..C_{l} (K={K}, l={l}, n={n})"
    return _timed("window covariance bookkeeping", 60, run)


def check_quadratic_identity(seed: int = 0, n_triples: int = 100) -> CheckResult:
    """Window CMSE, its quadratic form in ``b``, and the joint-covariance oracle agree."""
    def run():
        rng = _rng(seed, 5)
        worst_q, worst_o = 0.0, 0.0
        for _ in range(n_triples):
            K, l = int(rng.integers(1, 7)), int(rng.integers(0, 7))
            model = random_model(rng, K)
            b, g = rng.uniform(-2, 2, K), rng.standard_normal(l + 1)
            s2 = float(rng.uniform(0.1, 2.0))
            c = closed_form_cmse(model, b, g, s2, l)
            q = build_qcqp(model, g, s2, l, np.ones(K), 1.0).objective(b)
            o = window_cmse_oracle(model, b, g, s2, l)
            worst_q = max(worst_q, abs(c - q) / max(abs(o), 1e-300))
            worst_o = max(worst_o, abs(c - o) / max(abs(o), 1e-300))
        return max(worst_q, worst_o) <= 1e-9, f"max rel. gap: quadratic form {worst_q:.1e}, joint oracle {worst_o:.1e}"
    return _timed("window CMSE quadratic-form identity", 10, run)


def grid_minimum(problem: QcqpProblem, n: int = 2001) -> tuple[float, np.ndarray]:
    """Brute-force minimum of a 2-D box QCQP over an ``n x n`` grid."""
    s = np.sqrt(problem.bound)
    u = np.linspace(-s[0], s[0], n)
    v = np.linspace(-s[1], s[1], n)
    U, V = np.meshgrid(u, v, indexing="ij")
    Q, r = problem.Q, problem.r
    F = Q[0, 0] * U**2 + 2 * Q[0, 1] * U * V + Q[1, 1] * V**2 - 2 * (r[0] * U + r[1] * V) + problem.const
    k = np.unravel_index(np.argmin(F), F.shape)
    return float(F[k]), np.array([U[k], V[k]])


def check_qcqp(seed: int = 0, n_problems: int = 10) -> CheckResult:
    def run():
        rng = _rng(seed, 6)
        worst_grid, feasible, worst_int = 0.0, True, 0.0
        for _ in range(n_problems):
            B = rng.standard_normal((2, 2))
            prob = QcqpProblem(B @ B.T + 0.01 * np.eye(2), rng.standard_normal(2) * 2,
                               float(rng.uniform(0, 5)), rng.uniform(0.2, 3.0, 2))
            b = solve_qcqp(prob)
            feasible &= bool(np.all(b * b <= prob.bound))
            fmin, _ = grid_minimum(prob)
            worst_grid = max(worst_grid, abs(prob.objective(b) - fmin))
        for _ in range(n_problems):
            K = int(rng.integers(1, 8))
            B = rng.standard_normal((K, K))
            Q = B @ B.T + 0.5 * np.eye(K)
            r = rng.standard_normal(K)
            b_star = np.linalg.solve(Q, r)
            prob = QcqpProblem(Q, r, 0.0, (np.abs(b_star) + 1.0) ** 2)
            b = solve_qcqp(prob)
            worst_int = max(worst_int, np.linalg.norm(b - b_star) / (1 + np.linalg.norm(b_star)))
        ok = worst_grid <= 1e-4 and feasible and worst_int <= 1e-8
        return ok, (f"max gap to 2001^2 grid {worst_grid:.1e}, feasible={feasible}, "
                    f"interior gap to linear solve {worst_int:.1e}")
    return _timed("box QCQP solver", 60, run)


def check_alternating_descent(seed: int = 0, n_instances: int = 20) -> CheckResult:
    def run():
        rng = _rng(seed, 7)
        worst_rise = -np.inf
        for _ in range(n_instances):
            K, l = int(rng.integers(1, 7)), int(rng.integers(0, 6))
            model = random_model(rng, K)
            h = rng.rayleigh(1 / np.sqrt(2), K)
            tr = alternating_minimization(model, h, rng.uniform(1, 20), float(rng.uniform(0.2, 2)), l, rounds=20)
            seq = np.concatenate([[tr.initial_cmse], tr.cmse_sequence()])
            worst_rise = max(worst_rise, float(np.max(np.diff(seq))))
        tr = alternating_minimization(GaussMarkovModel.isotropic(0.9, 10), np.ones(10), 10.0, 1.0, 4, rounds=30)
        seq = np.array([r.cmse_after_b for r in tr.records])
        rel = np.abs(np.diff(seq)) / seq[:-1]
        conv = int(np.argmax(rel < 1e-6)) + 2 if np.any(rel < 1e-6) else None
        ok = worst_rise <= 1e-9 and conv is not None and conv <= 30
        return ok, (f"max half-step increase {worst_rise:.1e}; equal-gain channel (l=4) "
                    f"reaches 1e-6 relative change at round {conv}")
    return _timed("alternating minimization descent", 60, run)


def check_empirical_triangle(seed: int = 0, n: int = 200_000) -> CheckResult:
    """Closed-form window and Kalman CMSE against long sample-path averages."""
    from .experiments import empirical_cmse

    def run():
        rng = _rng(seed, 8)
        model = random_model(rng, 4, rho_max=0.9)
        b = rng.uniform(0.5, 1.5, 4)
        s2, l = 0.7, 3
        d = optimal_filter(model, b, s2, l)
        m_f, se_f = empirical_cmse(d.g, model, b, s2, n, 50, rng.integers(2**63))
        m_k, se_k = empirical_cmse("kf", model, b, s2, n, 50, rng.integers(2**63))
        kf = float(np.sum(steady_state_error(model, b, s2)))
        ok_f, z_f = _within(np.array(m_f), np.array(se_f), np.array(d.cmse))
        ok_k, z_k = _within(np.array(m_k), np.array(se_k), np.array(kf))
        return ok_f and ok_k and kf <= d.cmse + 1e-12, (
            f"window z={z_f:.2f}, kalman z={z_k:.2f}, kalman {kf:.4f} <= window {d.cmse:.4f}")
    return _timed("sample-path CMSE triangle", 60, run)


def check_scalar_kalman(seed: int = 0) -> CheckResult:
    """Memoryless scalar LMMSE and the scalar Riccati fixed point by bisection."""
    def run():
        rng = _rng(seed, 9)
        worst_mem, worst_ric = 0.0, 0.0
        for _ in range(20):
            v, bb, s2 = rng.uniform(0.1, 3), rng.uniform(-3, 3), rng.uniform(0.1, 3)
            m = GaussMarkovModel([[0.0]], [[v]])
            st = kf_update(kf_init(m), m, [bb], s2, 0.0)
            worst_mem = max(worst_mem, abs(st.M[0, 0] - v * s2 / (s2 + bb * bb * v)))
            a = rng.uniform(-0.95, 0.95)
            m = GaussMarkovModel([[a]], [[v]])
            M_inf = steady_state_error(m, [bb], s2)[0, 0]
            worst_ric = max(worst_ric, abs(M_inf - scalar_riccati_bisection(a, v, bb, s2)))
        return worst_mem <= 1e-12 and worst_ric <= 1e-9, (
            f"memoryless gap {worst_mem:.1e}, Riccati gap to bisection {worst_ric:.1e}")
    return _timed("scalar Kalman cases", 10, run)


CHECKS = (
    check_lyapunov,
    check_scalar_kalman,
    check_kalman_monte_carlo,
    check_filter_optimality,
    check_window_covariances,
    check_quadratic_identity,
    check_qcqp,
    check_alternating_descent,
    check_empirical_triangle,
)


def run_suite(seed: int = 0) -> list[CheckResult]:
    """Run every oracle check; each draws from its own substream of ``seed``."""
    out = []
    for fn in CHECKS:
        try:
            out.append(fn(seed=seed))
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            out.append(CheckResult(fn.__name__.removeprefix("check_").replace("_", " "), False,
                                   f"{type(exc).__name__}: {exc}"))
    return out
