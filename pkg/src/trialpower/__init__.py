"""Design and analysis of two-arm randomized trials with covariate adjustment.

The package covers the prospective workflow end to end: estimate
population parameters from historical control-arm data, compute the
asymptotic variances of the covariate-adjusted (AIPW) and unadjusted
analyses, solve for the required sample size, analyze completed trials,
and validate the whole pipeline by Monte-Carlo simulation.
"""

from ._version import __version__
from .core import (
    DIFFERENCE_IN_MEANS,
    ODDS_RATIO,
    DesignInputs,
    EffectDefinition,
    PopulationParams,
    efficient_variance,
    normal_cdf,
    normal_quantile,
    power,
    required_sample_size,
    unadjusted_variance,
)
from .design import (
    DesignReport,
    ParamsEstimate,
    estimate_population_params,
    plan_trial,
    split_allocation,
)
from .estimators import (
    AipwEstimator,
    AncovaEstimator,
    EstimateResult,
    OracleAipwEstimator,
    UnadjustedEstimator,
)
from .exceptions import DataError, InfeasibleDesignError, ValidationError
from .learners import (
    BoostedTreesRegressor,
    KNNRegressor,
    LinearRegressor,
    SelectingEnsembleRegressor,
    ZeroRegressor,
    cross_val_mse,
    cross_val_rmse,
    parse_learner,
)
from .simulation import (
    EstimatorConfig,
    GridConfig,
    PowerCurvePoint,
    ScenarioSpec,
    analytic_params,
    empirical_rate,
    experiment_grid,
    null_calibrated,
    run_replication,
    sample_counterfactual,
    scenario_names,
    table1_scenario,
    true_params,
)

__all__ = [
    "__version__",
    "DIFFERENCE_IN_MEANS",
    "ODDS_RATIO",
    "DesignInputs",
    "EffectDefinition",
    "PopulationParams",
    "efficient_variance",
    "normal_cdf",
    "normal_quantile",
    "power",
    "required_sample_size",
    "unadjusted_variance",
    "DesignReport",
    "ParamsEstimate",
    "estimate_population_params",
    "plan_trial",
    "split_allocation",
    "AipwEstimator",
    "AncovaEstimator",
    "EstimateResult",
    "OracleAipwEstimator",
    "UnadjustedEstimator",
    "DataError",
    "InfeasibleDesignError",
    "ValidationError",
    "BoostedTreesRegressor",
    "KNNRegressor",
    "LinearRegressor",
    "SelectingEnsembleRegressor",
    "ZeroRegressor",
    "cross_val_mse",
    "cross_val_rmse",
    "parse_learner",
    "EstimatorConfig",
    "GridConfig",
    "PowerCurvePoint",
    "ScenarioSpec",
    "analytic_params",
    "empirical_rate",
    "experiment_grid",
    "null_calibrated",
    "run_replication",
    "sample_counterfactual",
    "scenario_names",
    "table1_scenario",
    "true_params",
]
