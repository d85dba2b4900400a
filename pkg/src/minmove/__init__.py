"""Two-time-scale minimizing movements for second-order evolutions."""

from .energy import EnergyModel, SublevelBound, check_gradient, double_well, quadratic
from .bar import BarMesh, bar_model
from .minimize import DomainExhausted, IncrementalProblem, SolverSettings, solve_step
from .scheme import Forcing, SchemeParams, Trajectory, run
from .reference import exact_linear, solve_limit_rk4, solve_time_delayed
from .analysis import linf_error, rate_fit, stability_certificate

__all__ = [
    "BarMesh", "DomainExhausted", "EnergyModel", "Forcing", "IncrementalProblem",
    "SchemeParams", "SolverSettings", "SublevelBound", "Trajectory", "bar_model",
    "check_gradient", "double_well", "exact_linear", "linf_error", "quadratic",
    "rate_fit", "run", "solve_limit_rk4", "solve_step", "solve_time_delayed",
    "stability_certificate",
]
