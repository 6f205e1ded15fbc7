"""Command-line front end.

    aircomp <subcommand> [--config cfg.json] [--seed N] [--out DIR] [--threads N]
                         [--alpha A] [--K K] [--l L] [--rounds R] [--init MODE] [--tol T]

Exit codes: 0 success, 1 configuration error, 2 numerical/convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel import receive
from .config import ExperimentConfig, build_model, channel_for, parse_config, power_vector
from .errors import ConfigError, NumericalError
from .experiments import (convergence_trace, gnuplot_script, sweep_filter_length, write_trace_csv)
from .filter_policy import optimal_filter
from .kf_policy import estimate_sum, kf_cmse, kf_init, kf_update, steady_state_error
from .power_opt import alternating_minimization, full_power_scaling
from .signal_model import sample_stationary, step

SUBCOMMANDS = ("kf-run", "filter-design", "altmin", "sweep-l", "trace", "validate")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="aircomp_out", help="output directory")
    common.add_argument("--threads", type=int, help="worker processes (default: $AIRCOMP_THREADS or 1)")
    common.add_argument("--alpha", type=float)
    common.add_argument("--K", type=int)
    common.add_argument("--l", type=int)
    common.add_argument("--rounds", type=int)
    common.add_argument("--init", choices=("full-power", "custom"))
    common.add_argument("--tol", type=float)
    common.add_argument("--matrices", action="store_true", help="filter-design: also write M, V_c, C_i")

    parser = _Parser(prog="aircomp", description="AirComp fusion policies for correlated sensor signals")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=_Parser)
    sub.required = True
    helps = {
        "kf-run": "simulate the Kalman-filter policy, per-step CSV",
        "filter-design": "closed-form window filter for the configured scaling",
        "altmin": "alternating minimization of filter and scaling",
        "sweep-l": "channel-averaged CMSE versus window length",
        "trace": "alternating-minimization convergence on s1/s2 channels",
        "validate": "run the oracle suite",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _resolve_threads(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get("AIRCOMP_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"AIRCOMP_THREADS must be an integer, got {env!r}") from exc
    return None


def _where(exc: BaseException) -> str:
    """``module.function`` of the innermost package frame that raised."""
    frames = [f for f in traceback.extract_tb(exc.__traceback__) if f"{os.sep}aircomp{os.sep}" in f.filename]
    if not frames:
        return "aircomp"
    f = frames[-1]
    return f"{Path(f.filename).stem}.{f.name}"


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _write_matrix(path: Path, M) -> Path:
    M = np.atleast_2d(M)
    return _write_rows(path, [f"c{j}" for j in range(M.shape[1])], M.tolist())


def _scaling(cfg: ExperimentConfig, model, h, P) -> np.ndarray:
    if cfg.b is not None:
        b = np.asarray(cfg.b, dtype=float)
        if b.shape != (model.dim,):
            raise ConfigError(f"b must have K={model.dim} entries")
        return b
    return full_power_scaling(model, h, P, cfg.power_bound)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def run_kf(cfg: ExperimentConfig, out: Path) -> list[Path]:
    model = build_model(cfg)
    h, P = channel_for(cfg), power_vector(cfg)
    b = _scaling(cfg, model, h, P)
    rng = _stream(cfg.seed, 0, 1)
    state = kf_init(model)
    sig = sample_stationary(model, rng)
    rows = []
    for t in range(cfg.n_steps):
        if t > 0:
            sig = step(model, sig, rng)
        y = receive(b, sig.x, cfg.sigma_z2, rng)
        state = kf_update(state, model, b, cfg.sigma_z2, y)
        rows.append((t, y, float(estimate_sum(state)), kf_cmse(state), float(sig.x.sum())))
    return [_write_rows(out / "kf_run.csv", ["t", "y_t", "chi_t", "cmse_theoretical", "sum_true"], rows)]


def run_filter_design(cfg: ExperimentConfig, out: Path) -> list[Path]:
    model = build_model(cfg)
    h, P = channel_for(cfg), power_vector(cfg)
    b = _scaling(cfg, model, h, P)
    d = optimal_filter(model, b, cfg.sigma_z2, cfg.l)
    kf = float(np.sum(steady_state_error(model, b, cfg.sigma_z2)))
    paths = [
        _write_rows(out / "filter_taps.csv", ["tap", "g"], [(i, float(v)) for i, v in enumerate(d.g)]),
        _write_rows(out / "filter_summary.csv", ["l", "cmse_closed_form", "cmse_kf_steady_state"],
                    [(cfg.l, d.cmse, kf)]),
    ]
    if cfg.emit_matrices:
        paths.append(_write_matrix(out / "M_obs.csv", d.M_obs))
        paths.append(_write_matrix(out / "V_c.csv", d.V_c))
        paths += [_write_matrix(out / f"C_{i}.csv", C) for i, C in enumerate(d.C, start=1)]
    return paths


def run_altmin(cfg: ExperimentConfig, out: Path) -> list[Path]:
    model = build_model(cfg)
    h, P = channel_for(cfg), power_vector(cfg)
    init = None if cfg.init == "full-power" else cfg.b_init
    tr = alternating_minimization(model, h, P, cfg.sigma_z2, cfg.l, rounds=cfg.rounds, init=init,
                                  rule=cfg.power_bound, tol=cfg.tol)
    return [
        _write_rows(out / "altmin_trace.csv", ["round", "cmse_after_g", "cmse_after_b"],
                    [(r.round, r.cmse_after_g, r.cmse_after_b) for r in tr.records]),
        _write_rows(out / "altmin_solution.csv", ["k", "h", "b"],
                    [(k, float(h[k]), float(tr.b[k])) for k in range(model.dim)]),
        _write_rows(out / "altmin_filter.csv", ["tap", "g"], [(i, float(v)) for i, v in enumerate(tr.g)]),
    ]


def run_sweep(cfg: ExperimentConfig, out: Path) -> list[Path]:
    report = sweep_filter_length(cfg)
    csv_path = report.write_csv(out / "sweep.csv")
    gp = out / "plot_sweep.gp"
    gp.write_text(gnuplot_script(sweep_csv=csv_path.name))
    return [csv_path, gp]


def run_trace(cfg: ExperimentConfig, out: Path) -> list[Path]:
    csv_path = write_trace_csv(convergence_trace(cfg), out / "trace.csv")
    gp = out / "plot_trace.gp"
    gp.write_text(gnuplot_script(trace_csv=csv_path.name))
    return [csv_path, gp]


def run_validate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .validation import run_suite

    results = run_suite(seed=cfg.seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    path = _write_rows(out / "validate.csv", ["check", "passed", "detail"],
                       [(r.name, r.passed, r.detail) for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise NumericalError(f"{len(failed)} oracle check(s) failed: {', '.join(failed)}")
    return [path]


RUNNERS = {
    "kf-run": run_kf,
    "filter-design": run_filter_design,
    "altmin": run_altmin,
    "sweep-l": run_sweep,
    "trace": run_trace,
    "validate": run_validate,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest(subcommand: str, config: dict | None, seed) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "build": {"aircomp": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "started": _now(),
        "outputs": [],
        "status": "running",
    }


def _fail(manifest: dict, exc: BaseException) -> int:
    numerical = isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError))
    manifest["status"] = "numerical-error" if numerical else "config-error"
    manifest["error"] = f"{_where(exc)}: {exc}"
    kind = "numerical error" if numerical else "configuration error"
    print(f"{kind} in {manifest['error']}", file=sys.stderr)
    return EXIT_NUMERICAL if numerical else EXIT_CONFIG


def _finish(manifest: dict, out: Path) -> None:
    manifest["finished"] = _now()
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def dispatch(subcommand: str, cfg: ExperimentConfig, out_dir) -> int:
    """Run one subcommand and always leave a ``manifest.json`` in ``out_dir``."""
    out = Path(out_dir)
    manifest = _manifest(subcommand, cfg.to_dict(), cfg.seed)
    code = EXIT_OK
    try:
        if subcommand not in RUNNERS:
            raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}")
        out.mkdir(parents=True, exist_ok=True)
        manifest["outputs"] = [p.name for p in RUNNERS[subcommand](cfg, out)]
        manifest["status"] = "ok"
    except (ConfigError, NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        code = _fail(manifest, exc)
    finally:
        _finish(manifest, out)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    overrides = {
        "seed": args.seed, "alpha": args.alpha, "K": args.K, "l": args.l,
        "rounds": args.rounds, "init": args.init, "tol": args.tol,
    }
    if args.matrices:
        overrides["emit_matrices"] = True
    try:
        overrides["threads"] = _resolve_threads(args.threads)
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        manifest = _manifest(args.command, {"path": args.config, "overrides": overrides}, args.seed)
        code = _fail(manifest, exc)
        _finish(manifest, Path(args.out))
        return code
    return dispatch(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
