from .adapt import adapt_tf, estimate_mean_period, estimate_periods
from .base import ChainState, LimitState, SamplerConfig, StepOutcome, draw_momentum
from .hitting import (
    HitTimeError,
    analytic_hit_time_linear,
    newton_hit_time,
    secant_hit_time,
    sinusoid_first_root,
)
from .hmc import bb_hmc_step_gaussian, bb_hmc_step_generic, rs_hmc_step_gaussian, rs_hmc_step_generic
from .mh import block_mh_step, cwmh_step

__all__ = [
    "ChainState",
    "HitTimeError",
    "LimitState",
    "SamplerConfig",
    "StepOutcome",
    "adapt_tf",
    "analytic_hit_time_linear",
    "bb_hmc_step_gaussian",
    "bb_hmc_step_generic",
    "block_mh_step",
    "cwmh_step",
    "draw_momentum",
    "estimate_mean_period",
    "estimate_periods",
    "newton_hit_time",
    "rs_hmc_step_gaussian",
    "rs_hmc_step_generic",
    "secant_hit_time",
    "sinusoid_first_root",
]
