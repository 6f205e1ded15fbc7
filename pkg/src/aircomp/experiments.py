"""Monte Carlo harness: sample-path CMSE estimates, channel-averaged sweeps
over the window length, and alternating-minimization convergence traces.

Channel realization ``i`` always draws from its own seed substream, and
per-realization results are reduced in index order, so outputs do not depend
on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import evenly_spaced_channel, receive
from .config import ExperimentConfig, build_model, channel_for, power_vector
from .errors import ConfigError
from .filter_policy import filter_series
from .kf_policy import run_kalman, steady_state_error
from .power_opt import alternating_minimization
from .signal_model import GaussMarkovModel, simulate

N_BATCHES = 20
REFERENCE_REALIZATIONS = 100_000
SWEEP_HEADER = ["alpha", "K", "l", "policy", "cmse_mean", "cmse_stderr", "n_realizations"]
TRACE_HEADER = ["scenario", "round", "cmse_after_g", "cmse_after_b"]
KF_TAG = "kf-optimal"
LC_TAG = "low-complexity"


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def batch_means(values, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Sample mean and batch-means standard error of a correlated sequence."""
    values = np.asarray(values, dtype=float)
    m = values.size // n_batches
    if m < 1:
        raise ConfigError(f"need at least {n_batches} samples for batch means, got {values.size}")
    batches = values[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(values.mean()), float(batches.std(ddof=1) / np.sqrt(n_batches))


def empirical_cmse(policy, model: GaussMarkovModel, b, sigma_z2: float, n: int,
                   burn_in: int, seed) -> tuple[float, float]:
    """Time-averaged ``(chi_t - 1^T x_t)^2`` along one simulated stationary path.

    ``policy`` is ``"kf"`` for the Kalman-filter policy or a tap vector ``g``
    for the window filter. Returns ``(mean, standard error)`` with 20 batch
    means to account for correlation between successive errors.
    """
    if n < 100:
        raise ConfigError(f"n must be at least 100, got {n}")
    if burn_in < 0:
        raise ConfigError("burn_in must be nonnegative")
    is_kf = isinstance(policy, str)
    if is_kf and policy != "kf":
        raise ConfigError(f"unknown policy {policy!r}")
    g = None if is_kf else np.asarray(policy, dtype=float)
    l = 0 if is_kf else g.size - 1
    start = max(burn_in, l)
    rng = np.random.default_rng(seed)
    xs = simulate(model, start + n - 1, rng)
    y = receive(b, xs, sigma_z2, rng)
    target = xs.sum(axis=1)
    if is_kf:
        chi, _ = run_kalman(model, b, sigma_z2, y)
        err = chi[start:] - target[start:]
    else:
        chi = filter_series(g, y)  # chi[k] is the output at time k + l
        err = chi[start - l:] - target[start:]
    return batch_means(err**2)


def _ordered_map(fn, tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _altmin_init(cfg: ExperimentConfig):
    return None if cfg.init == "full-power" else np.asarray(cfg.b_init, dtype=float)


def evaluate_sweep(model: GaussMarkovModel, h: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    """Window-filter CMSE for every ``l`` in the sweep, then the Kalman-policy CMSE.

    The Kalman policy reuses the scaling designed for the largest ``l``.
    """
    P = power_vector(cfg, model.dim)
    out = []
    b = None
    for l in cfg.l_values:
        trace = alternating_minimization(model, h, P, cfg.sigma_z2, l, rounds=cfg.rounds,
                                         init=_altmin_init(cfg), rule=cfg.power_bound, tol=cfg.tol)
        out.append(trace.final_cmse)
        b = trace.b
    out.append(float(np.sum(steady_state_error(model, b, cfg.sigma_z2))))
    return np.array(out)


def _realization_task(task):
    evaluate, model, cfg, index = task
    h = channel_for(cfg, model.dim, index)
    return np.atleast_1d(np.asarray(evaluate(model, h, cfg), dtype=float))


def monte_carlo_over_channels(cfg: ExperimentConfig, model: GaussMarkovModel | None = None,
                              evaluate=evaluate_sweep, threads: int | None = None,
                              n: int | None = None) -> np.ndarray:
    """Evaluate a per-channel pipeline on independent channel realizations.

    Returns the stacked per-realization results, shape ``(n, m)``, in
    realization order. ``evaluate(model, h, cfg)`` must be a module-level
    function when ``threads > 1``.
    """
    model = build_model(cfg) if model is None else model
    n = cfg.n_channel_realizations if n is None else n
    threads = cfg.threads if threads is None else threads
    tasks = [(evaluate, model, cfg, i) for i in range(n)]
    return np.vstack(_ordered_map(_realization_task, tasks, threads))


def mean_and_stderr(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard errors across realizations (rows)."""
    samples = np.atleast_2d(samples)
    n = samples.shape[0]
    se = samples.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(samples.shape[1])
    return samples.mean(axis=0), se


@dataclass
class CmseRow:
    alpha: float
    K: int
    l: int
    policy: str
    cmse_mean: float
    cmse_stderr: float
    n_realizations: int


@dataclass
class CmseReport:
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)

    def select(self, alpha: float, K: int, policy: str):
        """``(l, mean, stderr)`` arrays for one curve."""
        rows = [r for r in self.rows if r.alpha == alpha and r.K == K and r.policy == policy]
        return (np.array([r.l for r in rows]), np.array([r.cmse_mean for r in rows]),
                np.array([r.cmse_stderr for r in rows]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for note in self.notes:
            buf.write(f"# {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r.alpha), r.K, r.l, r.policy, _fmt(r.cmse_mean), _fmt(r.cmse_stderr),
                        r.n_realizations])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path


def sweep_filter_length(cfg: ExperimentConfig, threads: int | None = None) -> CmseReport:
    """Channel-averaged CMSE versus window length for every (alpha, K) pair."""
    n = cfg.n_channel_realizations
    report = CmseReport()
    report.notes.append(f"channel realizations per point: {n}")
    if n != REFERENCE_REALIZATIONS:
        report.notes.append(f"deviates from the {REFERENCE_REALIZATIONS}-realization protocol (desk scale)")
    report.notes.append(f"{KF_TAG} rows use the scaling designed at l={max(cfg.l_values)}")
    for alpha in cfg.alpha_values:
        for K in cfg.K_values:
            model = build_model(cfg, K=K, alpha=alpha)
            samples = monte_carlo_over_channels(cfg, model, evaluate_sweep, threads)
            report.samples[(alpha, K)] = samples
            mean, se = mean_and_stderr(samples)
            for j, l in enumerate(cfg.l_values):
                report.rows.append(CmseRow(alpha, K, l, LC_TAG, float(mean[j]), float(se[j]), n))
            for l in cfg.l_values:
                report.rows.append(CmseRow(alpha, K, l, KF_TAG, float(mean[-1]), float(se[-1]), n))
    return report


@dataclass(frozen=True)
class TraceRow:
    scenario: str
    round: int
    cmse_after_g: float
    cmse_after_b: float


def convergence_trace(cfg: ExperimentConfig) -> dict:
    """Alternating-minimization traces for the equal (s1) and spread (s2) channels.

    Returns ``{scenario: AltMinTrace}`` with scenarios named ``s1-K<K>`` and
    ``s2-K<K>`` for every K in the config; uses ``cfg.l`` and ``cfg.alpha``.
    """
    traces = {}
    for K in cfg.K_values:
        model = build_model(cfg, K=K)
        P = power_vector(cfg, K)
        for name, h in (("s1", np.ones(K)), ("s2", evenly_spaced_channel(K))):
            traces[f"{name}-K{K}"] = alternating_minimization(
                model, h, P, cfg.sigma_z2, cfg.l, rounds=cfg.rounds, init=_altmin_init(cfg),
                rule=cfg.power_bound, tol=cfg.tol)
    return traces


def trace_rows(traces: dict) -> list:
    return [TraceRow(name, rec.round, rec.cmse_after_g, rec.cmse_after_b)
            for name, tr in traces.items() for rec in tr.records]


def write_trace_csv(traces: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace_rows(traces):
            w.writerow([r.scenario, r.round, _fmt(r.cmse_after_g), _fmt(r.cmse_after_b)])
    return path


def gnuplot_script(sweep_csv: str | None = None, trace_csv: str | None = None) -> str:
    """Plain-text gnuplot script that plots the sweep and/or trace CSVs."""
    lines = ["set datafile separator ','", "set key outside", "set grid"]
    if sweep_csv:
        lines += [
            "set terminal pngcairo size 900,600",
            "set output 'sweep.png'",
            "set xlabel 'l (window holds l+1 samples)'",
            "set ylabel 'computation MSE'",
            f"plot for [pol in '{LC_TAG} {KF_TAG}'] '{sweep_csv}' "
            "using 3:(strcol(4) eq pol ? $5 : 1/0):6 with yerrorlines title pol",
        ]
    if trace_csv:
        lines += [
            "set terminal pngcairo size 900,600",
            "set output 'trace.png'",
            "set xlabel 'round'",
            "set ylabel 'computation MSE after b-step'",
            f"plot '{trace_csv}' using 2:4 every ::1 with linespoints title 'all scenarios'",
        ]
    return "\n".join(lines) + "\n"
