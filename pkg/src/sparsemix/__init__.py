"""Model-based clustering with sparse component covariance matrices.

Each mixture component carries a covariance graph: missing edges force the
matching covariance entries to exact zeros. Fitting couples an EM loop with
a per-component structure search (stepwise or evolutionary) over graphs,
scored by a penalized profile likelihood with pluggable graph penalties.
"""

from .exceptions import (DegenerateComponentError, NotPositiveDefiniteError,
                         SparsemixError)
from .graphs import Graph, random_er, structure_stats
from .icf import (BACKEND, IcfConfig, IcfResult, PriorSpec, ScoredStructure,
                  fit_covariance, fit_covariance_map, objective_score,
                  regularized_moments)
from .metrics import MetricReport, adjusted_rand_index, graph_recovery_rates
from .numerics import correlation_matrix, mvn_logpdf, weighted_moments
from .penalties import PenaltySpec, default_er_alpha, penalty_value
from .search import (GaConfig, StepwiseConfig, StructureEvaluator, ga_search,
                     occam_filter, stepwise_search)
from .sem import (FitResult, MixtureModel, SemConfig, bic_score, classify,
                  default_prior, e_step, fit, init_graphs, init_partition,
                  m_step_weights_means, param_count, penalized_objective,
                  s_step, select_model)
from .simulate import ScenarioSpec, sample_mixture, scenario_components

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DegenerateComponentError",
    "FitResult",
    "GaConfig",
    "Graph",
    "IcfConfig",
    "IcfResult",
    "MetricReport",
    "MixtureModel",
    "NotPositiveDefiniteError",
    "PenaltySpec",
    "PriorSpec",
    "ScenarioSpec",
    "ScoredStructure",
    "SemConfig",
    "SparsemixError",
    "StepwiseConfig",
    "StructureEvaluator",
    "adjusted_rand_index",
    "bic_score",
    "classify",
    "correlation_matrix",
    "default_er_alpha",
    "default_prior",
    "e_step",
    "fit",
    "fit_covariance",
    "fit_covariance_map",
    "ga_search",
    "graph_recovery_rates",
    "init_graphs",
    "init_partition",
    "m_step_weights_means",
    "mvn_logpdf",
    "objective_score",
    "occam_filter",
    "param_count",
    "penalized_objective",
    "penalty_value",
    "random_er",
    "regularized_moments",
    "s_step",
    "sample_mixture",
    "scenario_components",
    "select_model",
    "stepwise_search",
    "structure_stats",
    "weighted_moments",
]
