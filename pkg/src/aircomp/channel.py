"""Real-valued multiple-access channel with channel-absorbed Tx scaling.

Throughout the package ``b`` denotes the *effective* scaling ``h_k * b_k``;
the per-sensor gain actually applied is ``b / h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

RAYLEIGH_SCALE = 1.0 / np.sqrt(2.0)  # gives E[h^2] = 1


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        P = np.broadcast_to(np.asarray(self.P, dtype=float), h.shape).copy()
        if not np.all(np.isfinite(h)):
            raise ConfigError("channel coefficients must be finite")
        if np.any(P <= 0) or not np.all(np.isfinite(P)):
            raise ConfigError("power limits must be finite and positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "P", P)

    @property
    def dim(self) -> int:
        return self.h.size


def sample_rayleigh(K: int, rng: np.random.Generator) -> np.ndarray:
    """K independent Rayleigh magnitudes normalised to unit mean-square."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    return rng.rayleigh(RAYLEIGH_SCALE, size=K)


def evenly_spaced_channel(K: int, low: float = 0.1, high: float = 1.9) -> np.ndarray:
    """Unequal-gain test channel: K evenly spaced values in [low, high]."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    return np.linspace(low, high, K)


def absorb_channel(h, b_raw) -> np.ndarray:
    """Effective scaling ``h * b_raw``."""
    h = np.asarray(h, dtype=float)
    b_raw = np.asarray(b_raw, dtype=float)
    if h.shape != b_raw.shape:
        raise ValueError(f"shape mismatch: h {h.shape} vs b_raw {b_raw.shape}")
    return h * b_raw


def receive(b, x, sigma_z2: float, rng: np.random.Generator | None = None):
    """Superimposed reception ``y = b^T x + z`` with ``z ~ N(0, sigma_z2)``.

    ``x`` may carry leading batch axes; one noise sample is drawn per row.
    With ``sigma_z2 == 0`` no randomness is consumed and ``rng`` may be None.
    """
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != b.shape:
        raise ValueError(f"shape mismatch: b {b.shape} vs x {x.shape}")
    if sigma_z2 < 0:
        raise ValueError("noise variance must be nonnegative")
    y = x @ b
    if sigma_z2 > 0:
        y = y + np.sqrt(sigma_z2) * rng.standard_normal(np.shape(y))
    return float(y) if np.ndim(y) == 0 else y
