"""Over-the-air computation of sums of correlated Gauss-Markov sensor signals.

Two fusion policies are provided: a Kalman filter that tracks every sensor
signal (:mod:`aircomp.kf_policy`) and a fixed linear filter over a short
window of received samples (:mod:`aircomp.filter_policy`). Transmit scalings
for the latter are optimized in :mod:`aircomp.power_opt`.
"""

__version__ = "0.1.0"

from .errors import AirCompError, ConfigError, ConvergenceError, InstabilityError, NumericalError
from .signal_model import GaussMarkovModel, SignalState, sample_stationary, simulate, solve_lyapunov, step
from .channel import absorb_channel, evenly_spaced_channel, receive, sample_rayleigh
from .kf_policy import KalmanState, estimate_sum, kf_cmse, kf_init, kf_update, steady_state_error
from .filter_policy import FilterDesign, apply_filter, closed_form_cmse, optimal_filter
from .power_opt import alternating_minimization, build_qcqp, solve_qcqp
from .config import ExperimentConfig, parse_config
