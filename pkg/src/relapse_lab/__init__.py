"""Survival prediction lab: censored-cohort models scored by information gain.

The package fits an exponential reference prior, proportional-hazards and
constant-hazard Cox regressions, and a Bayesian skew-Student mixture to
right-censored relapse cohorts, then scores their predictive distributions
in nepers relative to the prior.
"""

from .cohort import (
    Cohort,
    DEFAULT_SCHEMA,
    PatientRecord,
    SynthConfig,
    generate_synthetic,
    load_cohort,
    save_cohort,
)
from .cox_const import (
    ConstantHazardModel,
    constant_hazard_prediction,
    fit_constant_hazard,
)
from .cox_ph import (
    CoxModel,
    SpikeDistribution,
    blur_spikes,
    fit_cox,
    predict_spikes,
    unblurred_gives_minus_infinity,
)
from .errors import (
    CohortFormatError,
    CollinearityError,
    ConfigError,
    DomainError,
    EvaluationError,
    FitError,
    InitializationError,
    LeakageError,
    MonotoneLikelihoodError,
    RelapseLabError,
    SchemaMismatchError,
    SplitError,
    UnitMismatchError,
    ZeroEventsError,
)
from .metrics import (
    ComparisonReport,
    InfoReport,
    PosteriorSummary,
    compare_methods,
    concordance,
    order_asi,
    order_outcomes,
    pair_probability,
    time_asi,
    time_contributions,
)
from .mixture import (
    ChainConfig,
    HyperParams,
    MixtureSample,
    geweke_z,
    predictive_curve,
    predictive_curves,
    run_mcmc,
)
from .persist import METHODS, SavedModel, fit_model, load_model, save_model
from .predictions import (
    DEFAULT_HORIZON,
    SurvivalPrediction,
    evaluation_grid,
    time_grid,
)
from .prior import ExponentialPrior, fit_exponential_prior, prior_prediction
from .scenarios import (
    COMPARISON_PAIRS,
    SCENARIOS,
    BootstrapReport,
    ScenarioResult,
    SplitPlan,
    harrell_bootstrap,
    make_split,
    memorizer_demo,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapReport",
    "COMPARISON_PAIRS",
    "ChainConfig",
    "Cohort",
    "CohortFormatError",
    "CollinearityError",
    "ComparisonReport",
    "ConfigError",
    "ConstantHazardModel",
    "CoxModel",
    "DEFAULT_HORIZON",
    "DEFAULT_SCHEMA",
    "DomainError",
    "EvaluationError",
    "ExponentialPrior",
    "FitError",
    "HyperParams",
    "InfoReport",
    "InitializationError",
    "LeakageError",
    "METHODS",
    "MixtureSample",
    "MonotoneLikelihoodError",
    "PatientRecord",
    "PosteriorSummary",
    "RelapseLabError",
    "SCENARIOS",
    "SavedModel",
    "ScenarioResult",
    "SchemaMismatchError",
    "SpikeDistribution",
    "SplitError",
    "SplitPlan",
    "SurvivalPrediction",
    "SynthConfig",
    "UnitMismatchError",
    "ZeroEventsError",
    "blur_spikes",
    "compare_methods",
    "concordance",
    "constant_hazard_prediction",
    "evaluation_grid",
    "fit_constant_hazard",
    "fit_cox",
    "fit_exponential_prior",
    "fit_model",
    "generate_synthetic",
    "geweke_z",
    "harrell_bootstrap",
    "load_cohort",
    "load_model",
    "make_split",
    "memorizer_demo",
    "order_asi",
    "order_outcomes",
    "pair_probability",
    "predict_spikes",
    "predictive_curve",
    "predictive_curves",
    "prior_prediction",
    "run_mcmc",
    "run_scenario",
    "save_cohort",
    "save_model",
    "time_asi",
    "time_contributions",
    "time_grid",
    "unblurred_gives_minus_infinity",
]
