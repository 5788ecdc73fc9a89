"""Kernelized movement primitives.

Learn a probabilistic reference trajectory from demonstrations (GMM + GMR),
predict mean and full covariance at arbitrary queries through a kernelized
covariance-weighted ridge solution, and adapt trajectories via desired
points, superposition, local frames, and time scaling.
"""

from .config import ExperimentConfig, PRESETS, exp_switch_priorities
from .errors import (
    ComponentCollapseError,
    ConditioningError,
    ExtrapolationWarning,
    FactorizationError,
    NumericalError,
    ValidationError,
)
from .experiments import ForceEvent, force_sim_step, run_experiment
from .frames import LocalFrame, LocalKMPSet, fit_local_kmp_set
from .gaussian import Gaussian, condition, log_density, scaled_product
from .io import load_demos, save_demos, save_trajectory
from .kernels import KernelSpec
from .mixture import DemoSet, GaussianMixtureRegressor, resample_demo, with_derivative_outputs
from .model import KMP, TimeScale, position_desired_point
from .reference import (
    DesiredPoint,
    ReferenceDatabase,
    default_zeta,
    resample_database,
    superpose,
    update_database,
)

__version__ = "0.1.0"

__all__ = [
    "ComponentCollapseError",
    "ConditioningError",
    "DemoSet",
    "DesiredPoint",
    "ExperimentConfig",
    "ExtrapolationWarning",
    "FactorizationError",
    "ForceEvent",
    "Gaussian",
    "GaussianMixtureRegressor",
    "KMP",
    "KernelSpec",
    "LocalFrame",
    "LocalKMPSet",
    "NumericalError",
    "PRESETS",
    "ReferenceDatabase",
    "TimeScale",
    "ValidationError",
    "condition",
    "default_zeta",
    "exp_switch_priorities",
    "fit_local_kmp_set",
    "force_sim_step",
    "load_demos",
    "log_density",
    "position_desired_point",
    "resample_database",
    "resample_demo",
    "run_experiment",
    "save_demos",
    "save_trajectory",
    "scaled_product",
    "superpose",
    "update_database",
    "with_derivative_outputs",
]
