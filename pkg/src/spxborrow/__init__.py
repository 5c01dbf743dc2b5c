"""Historical-control borrowing for binary-endpoint trials.

The SPx prior model-averages three borrowing mechanisms for a new trial's
control response rate — direct borrowing from historical rates, regression
on group-level covariates, and no borrowing — and pairs with a two-stage
adaptive design that converts posterior precision into control-arm patients
saved. RMAP and a no-borrowing model are included as comparators, along
with a replicated-trial harness for Frequentist operating characteristics.
"""

from .design import (
    DesignConfig,
    FinalAnalysis,
    InterimPlan,
    TreatmentSummary,
    complete_trial,
    decide,
    effect_draws,
    ess_moment_match,
    run_adaptive_trial,
    stage2_size,
    treatment_posterior,
)
from .inference import (
    McmcConfig,
    PosteriorDraws,
    PosteriorSummary,
    RmapParams,
    StepSizes,
    fit_independent,
    fit_rmap,
    fit_spx,
    summarize,
    update_z,
)
from .io import (
    ConfigError,
    DataValidationError,
    ReportBundle,
    RunConfig,
    emit_report,
    fixture_path,
    load_case_study,
    load_historical_csv,
    load_run_config,
)
from .model import (
    EXPERTS,
    BorrowWeights,
    Dataset,
    ParameterState,
    SpxHyperParams,
    TrialSummary,
    borrow_weights,
    inv_logit,
    log_joint,
    logit,
    weighted_mean,
)
from .simulate import (
    OperatingCharacteristics,
    ReplicateRecord,
    ScenarioConfig,
    SweepPoint,
    gen_historical,
    gen_new_trial,
    run_scenario,
    sweep_observed_rate,
)

__version__ = "0.1.0"

__all__ = [
    "BorrowWeights",
    "ConfigError",
    "Dataset",
    "DataValidationError",
    "DesignConfig",
    "EXPERTS",
    "FinalAnalysis",
    "InterimPlan",
    "McmcConfig",
    "OperatingCharacteristics",
    "ParameterState",
    "PosteriorDraws",
    "PosteriorSummary",
    "ReplicateRecord",
    "ReportBundle",
    "RmapParams",
    "RunConfig",
    "ScenarioConfig",
    "SpxHyperParams",
    "StepSizes",
    "SweepPoint",
    "TreatmentSummary",
    "TrialSummary",
    "borrow_weights",
    "complete_trial",
    "decide",
    "effect_draws",
    "emit_report",
    "ess_moment_match",
    "fit_independent",
    "fit_rmap",
    "fit_spx",
    "fixture_path",
    "gen_historical",
    "gen_new_trial",
    "inv_logit",
    "load_case_study",
    "load_historical_csv",
    "load_run_config",
    "log_joint",
    "logit",
    "run_adaptive_trial",
    "run_scenario",
    "stage2_size",
    "summarize",
    "sweep_observed_rate",
    "treatment_posterior",
    "update_z",
    "weighted_mean",
]
