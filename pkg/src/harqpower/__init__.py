"""Outage-limited power allocation for repetition (RTD) and incremental
redundancy (INR) HARQ over Rayleigh fading."""
from ._longterm import Model, Protocol
from .errors import (
    ConfigError,
    DegeneratePolicyError,
    DomainError,
    HarqError,
    InfeasibleError,
    NumericError,
    UnsupportedConfigurationError,
)
from .fading import FadingSpec, Temporal, gain_cdf, gain_inv_cdf, gain_pdf, sample_gain_path, sample_gains
from .inr import EnergySchedule, InrRateSchedule, decode_thresholds, inr_metrics, inr_short_term_power
from .optimizer import (
    Objective,
    OptimizationResult,
    OptimizerConfig,
    geometric_allocation,
    optimize,
    power_efficiency,
    relative_throughput_loss,
    solve_last_round_power,
)
from .policy import DecodeProfile, Metrics, PowerPolicy, db, from_db
from .rtd import RtdSpec, rtd_avg_power_lower_bound, rtd_fast_fading_outage, rtd_metrics, rtd_short_term_power
from .simulator import ReinforcementPolicy, SimConfig, simulate, simulate_reinforcement, tune_reinforcement

__version__ = "0.1.0"
