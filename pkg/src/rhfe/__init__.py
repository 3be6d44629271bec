"""Data-driven robust receding-horizon fault estimation."""

from .errors import RhfeError
from .estimator import (
    EstimatorGain,
    StackedWindow,
    estimate,
    estimate_trajectory,
    nominal_gain,
    original_model_gain,
)
from .identify import identify
from .models import (
    FaultConfig,
    MarkovSet,
    PredictorModel,
    StateSpaceModel,
    markov_parameters,
    steady_state_predictor,
)
from .online import build_context, run_adaptive, solve_online
from .robust import (
    RobustProblem,
    default_tuning,
    gamma_f_min,
    gamma_z_min,
    offline_gain,
    problem_from_markov,
    solve_offline,
    tradeoff_sweep,
)
from .simulate import (
    ControllerConfig,
    FaultProfile,
    TrajectoryDataset,
    fault_profile_benchmark,
    simulate_closed_loop,
    vtol_model,
)
from .zeros import invariant_zeros, unbiasedness_check

__version__ = "0.1.0"

__all__ = [
    "RhfeError",
    "EstimatorGain",
    "StackedWindow",
    "estimate",
    "estimate_trajectory",
    "nominal_gain",
    "original_model_gain",
    "identify",
    "FaultConfig",
    "MarkovSet",
    "PredictorModel",
    "StateSpaceModel",
    "markov_parameters",
    "steady_state_predictor",
    "build_context",
    "run_adaptive",
    "solve_online",
    "RobustProblem",
    "default_tuning",
    "gamma_f_min",
    "gamma_z_min",
    "offline_gain",
    "problem_from_markov",
    "solve_offline",
    "tradeoff_sweep",
    "ControllerConfig",
    "FaultProfile",
    "TrajectoryDataset",
    "fault_profile_benchmark",
    "simulate_closed_loop",
    "vtol_model",
    "invariant_zeros",
    "unbiasedness_check",
    "__version__",
]
