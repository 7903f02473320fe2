"""frontlab: Fisher-KPP fronts on a half-plane coupled to a line with fractional diffusion."""

__version__ = "0.1.0"

from .model import ConfigError, ModelParams, Nonlinearity, RoadFieldState, eval_reaction, make_params, positive_zero_v0
from .fracop import FracOperator, apply_frac_lap, frac_heat_multiplier_step, kernel_tail_check
from .field import InstabilityError, StripScheme, dirichlet_1d_column_solve, step_field
from .coupled import SimulationRun, run_fractional_kpp, run_simulation, step_coupled

__all__ = [
    "ConfigError", "ModelParams", "Nonlinearity", "RoadFieldState", "eval_reaction", "make_params",
    "positive_zero_v0", "FracOperator", "apply_frac_lap", "frac_heat_multiplier_step", "kernel_tail_check",
    "InstabilityError", "StripScheme", "dirichlet_1d_column_solve", "step_field", "SimulationRun",
    "run_fractional_kpp", "run_simulation", "step_coupled",
]
