"""Backward particle interpretation of Feynman-Kac path measures.

Mean-field particle filtering, genealogical path estimators, backward-kernel
smoothing with a forward-only recursion for additive functionals, and exact
finite-state oracles.
"""

from .estimator import BackwardSmoother
from .exceptions import (ConfigError, ConvergenceError, DegenerateWeightsError,
                         EnumerationCapError, EpochRangeError, FKError, HistoryError,
                         ModelContractError, ModelEvaluationError)
from .model import (FeynmanKacModel, FiniteStateModel, PathFunctional, ValidationReport,
                    iid_toy, potential_eval, transition_density, validate_model)
from .particles import (CloudHistory, ParticleCloud, SelectionConfig, empirical_measure,
                        genealogical_estimate, init_cloud, iterate_filter, mutate, run_filter,
                        select)
from .smoother import (BackwardWeightMatrix, ForwardSmoother, SmootherState, backward_matrix,
                       forward_smooth, forward_update, init_smoother, sample_backward_path,
                       smoothed_estimate, smoothed_estimate_batch)

__version__ = "0.1.0"

__all__ = [
    "BackwardSmoother", "BackwardWeightMatrix", "CloudHistory", "ConfigError",
    "ConvergenceError", "DegenerateWeightsError", "EnumerationCapError", "EpochRangeError",
    "FKError", "FeynmanKacModel", "FiniteStateModel", "ForwardSmoother", "HistoryError",
    "ModelContractError", "ModelEvaluationError", "ParticleCloud", "PathFunctional",
    "SelectionConfig", "SmootherState", "ValidationReport", "backward_matrix",
    "empirical_measure", "forward_smooth", "forward_update", "genealogical_estimate",
    "iid_toy", "init_cloud", "init_smoother", "iterate_filter", "mutate", "potential_eval",
    "run_filter", "sample_backward_path", "select", "smoothed_estimate",
    "smoothed_estimate_batch", "transition_density", "validate_model",
]
