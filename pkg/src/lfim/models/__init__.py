from .base import DegenerateSummaryError, GenerativeModel, ModelError
from .correlation import CorrelationModel, corr_simulate_summary, simulate_pairs
from .dp import DPBernoulliModel, dp_simulate_summary, tulap_sample, tulap_variance
from .gk import GKModel, gk_quantile, gk_simulate_summary, skew_kurtosis
from .ising import (
    AdjacencySpec,
    IsingModel,
    edge_sum_distribution,
    ising_exact_enumeration,
    ising_gibbs_simulate,
    ising_simulate_summary,
    odds_ratio_transform,
)
from .likelihood import likelihood_based_contour_mc, likelihood_contour_values

# identifier -> model class; the CLI builds models from this table
REGISTRY = {
    "correlation": CorrelationModel,
    "gk": GKModel,
    "dp_bernoulli": DPBernoulliModel,
    "ising": IsingModel,
}

__all__ = [
    "AdjacencySpec",
    "CorrelationModel",
    "DPBernoulliModel",
    "DegenerateSummaryError",
    "GKModel",
    "GenerativeModel",
    "IsingModel",
    "ModelError",
    "REGISTRY",
    "corr_simulate_summary",
    "dp_simulate_summary",
    "edge_sum_distribution",
    "gk_quantile",
    "gk_simulate_summary",
    "ising_exact_enumeration",
    "ising_gibbs_simulate",
    "ising_simulate_summary",
    "likelihood_based_contour_mc",
    "likelihood_contour_values",
    "odds_ratio_transform",
    "simulate_pairs",
    "skew_kurtosis",
    "tulap_sample",
    "tulap_variance",
]
