"""Optimal decentralized power control for the fading Gaussian multiple-access channel."""

from ._kernels import BACKEND
from .fading import FadingDistribution, FadingGrid, grid_mean, quantize
from .interference import InterferenceDistribution, build_interference, eval_f, invert_f
from .oracles import (
    BruteForceSpec,
    brute_force_discrete,
    constant_power_rate,
    waterfilling_single_user,
)
from .policy import PowerPolicy, average_power, check_monotone, has_single_threshold
from .solver import (
    CalibrationError,
    SolveResult,
    SolverConfig,
    am_solve,
    best_response,
    calibrate_lambda,
    kkt_residual,
    sum_rate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BruteForceSpec",
    "CalibrationError",
    "FadingDistribution",
    "FadingGrid",
    "InterferenceDistribution",
    "PowerPolicy",
    "SolveResult",
    "SolverConfig",
    "am_solve",
    "average_power",
    "best_response",
    "brute_force_discrete",
    "build_interference",
    "calibrate_lambda",
    "check_monotone",
    "constant_power_rate",
    "eval_f",
    "grid_mean",
    "has_single_threshold",
    "invert_f",
    "kkt_residual",
    "quantize",
    "sum_rate",
    "waterfilling_single_user",
]
