"""Experiment configuration: JSON parsing, defaults and validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .channel import evenly_spaced_channel, sample_rayleigh
from .errors import ConfigError, InstabilityError
from .power_opt import POWER_BOUNDS
from .signal_model import GaussMarkovModel

INIT_MODES = ("full-power", "custom")


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 0.9
    A: Any = None
    V_w: Any = "from_unit_Vx"
    K: int = 10
    sigma_z2: float = 1.0
    power: Any = 10.0
    channel: Any = field(default_factory=lambda: {"rayleigh": True})
    power_bound: str = "with_h2"
    l: int = 4
    l_values: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    K_values: tuple = (10, 20)
    alpha_values: tuple = (0.9, 0.99)
    rounds: int = 50
    tol: float = 1e-10
    init: str = "full-power"
    b_init: Any = None
    b: Any = None
    n_channel_realizations: int = 1000
    n_mc_samples: int = 100_000
    burn_in: Any = None
    n_steps: int = 200
    seed: int = 0
    threads: int = 1
    emit_matrices: bool = False

    def replace(self, **changes) -> "ExperimentConfig":
        return validate_config(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
            elif isinstance(v, np.ndarray):
                out[k] = v.tolist()
        return out

    def burn_in_for(self, l: int) -> int:
        return max(l, 50) if self.burn_in is None else int(self.burn_in)


KNOWN_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _positive_int(name: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
        raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check invariants and normalise list-valued fields; raises ConfigError naming the field."""
    ch = {}
    ch["K"] = _positive_int("K", cfg.K)
    for name in ("rounds", "n_channel_realizations", "n_mc_samples", "n_steps", "threads"):
        ch[name] = _positive_int(name, getattr(cfg, name))
    if isinstance(cfg.l, bool) or not isinstance(cfg.l, (int, np.integer)) or cfg.l < 0:
        raise ConfigError(f"l must be a nonnegative integer, got {cfg.l!r}")
    try:
        l_values = tuple(int(v) for v in cfg.l_values)
        K_values = tuple(_positive_int("K_values", v) for v in cfg.K_values)
        alpha_values = tuple(float(v) for v in cfg.alpha_values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"l_values/K_values/alpha_values must be lists of numbers: {exc}") from exc
    if not l_values or min(l_values) < 0:
        raise ConfigError("l_values must be a nonempty list of nonnegative integers")
    if not K_values or not alpha_values:
        raise ConfigError("K_values and alpha_values must be nonempty")
    ch.update(l_values=tuple(sorted(set(l_values))), K_values=K_values, alpha_values=alpha_values)
    if not float(cfg.sigma_z2) > 0:
        raise ConfigError(f"sigma_z2 must be positive, got {cfg.sigma_z2!r}")
    if float(cfg.tol) <= 0:
        raise ConfigError("tol must be positive")
    if cfg.power_bound not in POWER_BOUNDS:
        raise ConfigError(f"power_bound must be one of {POWER_BOUNDS}, got {cfg.power_bound!r}")
    if cfg.init not in INIT_MODES:
        raise ConfigError(f"init must be one of {INIT_MODES}, got {cfg.init!r}")
    if cfg.init == "custom" and cfg.b_init is None:
        raise ConfigError("init=custom requires b_init")
    if cfg.burn_in is not None and (not isinstance(cfg.burn_in, (int, np.integer)) or cfg.burn_in < 0):
        raise ConfigError(f"burn_in must be a nonnegative integer, got {cfg.burn_in!r}")
    power = np.asarray(cfg.power, dtype=float)
    if np.any(power <= 0) or not np.all(np.isfinite(power)):
        raise ConfigError("power must be positive")
    if power.ndim > 1 or (power.ndim == 1 and power.size != ch["K"]):
        raise ConfigError(f"power must be a scalar or a list of K={ch['K']} values")
    ch["channel"] = _check_channel(cfg.channel)
    if isinstance(ch["channel"].get("h"), list) and len(ch["channel"]["h"]) != ch["K"]:
        raise ConfigError(f"channel.h has {len(ch['channel']['h'])} entries, K={ch['K']}")
    out = dataclasses.replace(cfg, **ch)
    if cfg.A is None:
        for a in {float(cfg.alpha), *alpha_values}:
            if abs(a) >= 1:
                raise InstabilityError(f"alpha={a} gives spectral radius >= 1; process has no steady state")
    build_model(out)  # stability and PSD gate
    return out


def _check_channel(channel) -> dict:
    if not isinstance(channel, dict) or len(channel) != 1:
        raise ConfigError('channel must be {"rayleigh": true} or {"h": [...] | "s1" | "s2"}')
    (key, val), = channel.items()
    if key == "rayleigh":
        if val is not True:
            raise ConfigError("channel.rayleigh must be true")
        return {"rayleigh": True}
    if key == "h":
        if val in ("s1", "s2"):
            return {"h": val}
        try:
            h = [float(v) for v in val]
        except (TypeError, ValueError) as exc:
            raise ConfigError("channel.h must be a list of numbers, 's1' or 's2'") from exc
        if not all(np.isfinite(h)):
            raise ConfigError("channel.h must be finite")
        return {"h": h}
    raise ConfigError(f"unknown channel key {key!r}")


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (or none), apply overrides, fill defaults and validate."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    # a single K/alpha given without the list form narrows the sweep to it
    if "K" in raw and "K_values" not in raw:
        raw["K_values"] = [raw["K"]]
    if "alpha" in raw and "alpha_values" not in raw:
        raw["alpha_values"] = [raw["alpha"]]
    if isinstance(raw.get("A"), dict):
        A = raw.pop("A")
        if set(A) != {"alpha"}:
            raise ConfigError('A shorthand must be {"alpha": value}')
        raw["alpha"] = A["alpha"]
        raw.setdefault("alpha_values", [A["alpha"]])
    for k in ("l_values", "K_values", "alpha_values"):
        if k in raw:
            if not isinstance(raw[k], (list, tuple)):
                raise ConfigError(f"{k} must be a list")
            raw[k] = tuple(raw[k])
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate_config(cfg)


def build_model(cfg: ExperimentConfig, K: int | None = None, alpha: float | None = None) -> GaussMarkovModel:
    """Signal model from ``A``/``V_w`` if given explicitly, else ``A = alpha I``."""
    if cfg.A is not None:
        A = np.asarray(cfg.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError("A must be a square matrix (list of rows)")
        if A.shape[0] != (K or cfg.K):
            raise ConfigError(f"A is {A.shape[0]}x{A.shape[0]} but K={K or cfg.K}")
        if isinstance(cfg.V_w, str):
            if cfg.V_w != "from_unit_Vx":
                raise ConfigError(f"unknown V_w shorthand {cfg.V_w!r}")
            return GaussMarkovModel.with_unit_covariance(A)
        return GaussMarkovModel(A, np.asarray(cfg.V_w, dtype=float))
    K = cfg.K if K is None else K
    a = cfg.alpha if alpha is None else alpha
    if isinstance(cfg.V_w, str):
        if cfg.V_w != "from_unit_Vx":
            raise ConfigError(f"unknown V_w shorthand {cfg.V_w!r}")
        return GaussMarkovModel.isotropic(a, K)
    return GaussMarkovModel(a * np.eye(K), np.asarray(cfg.V_w, dtype=float))


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for channel realization ``index`` (independent of how many are drawn)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def channel_for(cfg: ExperimentConfig, K: int | None = None, index: int = 0) -> np.ndarray:
    """Channel vector: explicit/s1/s2 from the config, or Rayleigh realization ``index``."""
    K = cfg.K if K is None else K
    spec = cfg.channel
    if "rayleigh" in spec:
        return sample_rayleigh(K, realization_rng(cfg.seed, index))
    h = spec["h"]
    if h == "s1":
        return np.ones(K)
    if h == "s2":
        return evenly_spaced_channel(K)
    return np.asarray(h, dtype=float)


def power_vector(cfg: ExperimentConfig, K: int | None = None) -> np.ndarray:
    K = cfg.K if K is None else K
    return np.broadcast_to(np.asarray(cfg.power, dtype=float), (K,)).copy()
