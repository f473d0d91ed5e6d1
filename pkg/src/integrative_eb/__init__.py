"""Integrative empirical Bayes estimation of normal means with side information."""

from .kernel import NoiseSpec, log_density_corr, log_density_indep, log_sum_exp
from .oracle import (
    MeanSet,
    ObservationSet,
    oracle_correlated,
    oracle_integrative,
    oracle_regularized,
    oracle_univariate,
)
from .risk import (
    RuleParams,
    SupportVector,
    apply_rule,
    apply_rule_1d,
    loss,
    sure,
    sure_1d,
)
from .optimizer import FitConfig, FitResult, candidate_grid, fit_integrative, fit_univariate

__version__ = "0.1.0"
