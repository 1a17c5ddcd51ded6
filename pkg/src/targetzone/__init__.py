"""Optimal exchange-rate target zones for a singularly controlled diffusion.

The package solves the central bank's intervention problem: keep a
(log-)exchange rate inside a band by minimal purchases and sales of foreign
currency, trading off a running holding cost against proportional
intervention costs.  The optimal band is the solution of a two-sided
free-boundary system built from the transformed ("hat") diffusion's killed
fundamental solutions; the value function follows by smooth fit.  For a
mean-reverting log rate everything is available in closed form through
parabolic cylinder functions, and the optimality of the band can be audited
by Monte Carlo simulation of the reflected rate.
"""

from .diffusion import (ConstructionError, DiffusionModel, FundamentalPair,
                        fundamental_numeric, green, resolvent, scale_density,
                        speed_density)
from .exit_analysis import (ExitProfile, exit_probabilities, exit_profile,
                            expected_exit_time)
from .free_boundary import (BandSolution, CostModel, HjbReport, SolverError,
                            hjb_residual, k1, k2, solve_band, x_star, y_star)
from .mc import (SimConfig, SimReport, dynkin_game_value, estimate_cost,
                 estimate_exit_stats, policy_gap, simulate_reflected)
from .ou import (CalibrationError, OuFit, OuSpec, SweepResult, calibrate_costs,
                 default_spec, fit_ou_mle, ou_base_pair, ou_hat_pair,
                 solve_ou_band, sweep)
from .special_fn import erfc, gamma, pcf_d

__version__ = "0.1.0"

__all__ = [
    "BandSolution", "CalibrationError", "ConstructionError", "CostModel",
    "DiffusionModel", "ExitProfile", "FundamentalPair", "HjbReport",
    "OuFit", "OuSpec", "SimConfig", "SimReport", "SolverError",
    "SweepResult", "calibrate_costs", "default_spec", "dynkin_game_value",
    "erfc", "estimate_cost", "estimate_exit_stats", "exit_probabilities",
    "exit_profile", "expected_exit_time", "fit_ou_mle",
    "fundamental_numeric", "gamma", "green", "hjb_residual", "k1", "k2",
    "ou_base_pair", "ou_hat_pair", "pcf_d", "policy_gap", "resolvent",
    "scale_density", "simulate_reflected", "solve_band", "solve_ou_band",
    "speed_density", "sweep", "x_star", "y_star",
]
