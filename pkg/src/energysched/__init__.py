"""Power-minimising transmission scheduling over a time-varying channel."""

from .bounds import (
    BoundReport,
    DriftParams,
    drift_constants,
    drift_params,
    exp_moment_bound,
    gamma,
    i1_bound,
    i4_bound,
    occupancy_bound,
    occupancy_timeshare_bounds,
    queue_mean_bound,
    tuning,
    verify_bounds,
)
from .curve import (
    RatePowerCurve,
    TimeshareSolution,
    build_curve,
    converse_case,
    converse_min_time,
    h_of_mu,
    locate_segment,
)
from .ensemble import EnsembleResult, ensemble
from .models import ArrivalModel, ChannelModel, Phase, PhaseSchedule, validate_channel
from .policies import DppConfig, OmegaOnlyPolicy, design_omega_only, threshold_policy
from .scenario import Scenario, bundled, load
from .sim import Discipline, Trace, delay_stats, epsilon_check, run, time_averages

__version__ = "0.1.0"

__all__ = [
    "ArrivalModel",
    "BoundReport",
    "ChannelModel",
    "Discipline",
    "DppConfig",
    "DriftParams",
    "EnsembleResult",
    "OmegaOnlyPolicy",
    "Phase",
    "PhaseSchedule",
    "RatePowerCurve",
    "Scenario",
    "TimeshareSolution",
    "Trace",
    "build_curve",
    "bundled",
    "converse_case",
    "converse_min_time",
    "delay_stats",
    "design_omega_only",
    "drift_constants",
    "drift_params",
    "ensemble",
    "epsilon_check",
    "exp_moment_bound",
    "gamma",
    "h_of_mu",
    "i1_bound",
    "i4_bound",
    "load",
    "locate_segment",
    "occupancy_bound",
    "occupancy_timeshare_bounds",
    "queue_mean_bound",
    "run",
    "threshold_policy",
    "time_averages",
    "tuning",
    "validate_channel",
    "verify_bounds",
]
