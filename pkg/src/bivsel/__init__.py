"""Variable selection for binary outcomes under missing data.

The package combines multiple imputation (chained equations with predictive
mean matching, or iterative random forests) with bootstrap-stabilized
variable selection: each bootstrap replicate is imputed and screened by one
of six selectors (probit-tree ensemble with permutation thresholds, random
forest / conditional forest / gradient boosting with recursive elimination,
L1-penalized logistic regression, backward stepwise logistic regression),
and variables are kept when their selection frequency clears a threshold.
"""

from .ampute import (
    AmputationPlan,
    Pattern,
    Tail,
    ampute,
    load_plan,
    missingness_probs,
    plan_from_config,
    plan_to_config,
    save_plan,
    weighted_sum_scores,
)
from .data import (
    ColumnKind,
    DataMatrix,
    DerivedColumn,
    RngHandle,
    TransformSpec,
    load_csv,
    save_csv,
)
from .errors import (
    BivselError,
    CalibrationError,
    FitError,
    ImputationError,
    ParseError,
    PipelineError,
    SchemaError,
    SelectionError,
    TransformError,
)
from .ensemble import (
    BartModel,
    BartParams,
    BoostModel,
    ForestModel,
    GbmParams,
    fit_bart,
    fit_crf,
    fit_gbm,
    fit_rf,
    forest_oob_error,
    gbm_importance,
    logistic_grad_hess,
    oob_importance,
)
from .impute import (
    BootstrapImputeSet,
    ChainedEquations,
    IterativeForest,
    bootstrap_impute,
    impute,
)
from .linear import (
    LassoPath,
    LogisticFit,
    StepwiseTrace,
    fit_lasso_path,
    fit_logistic,
    lasso_select,
    stepwise_select,
)
from .metrics import MetricsReport, ReplicateScore, TruthSpec, aggregate, score
from .select import (
    DEFAULT_PI,
    METHOD_NAMES,
    BartSelect,
    CrfSelect,
    EliminationSchedule,
    ErrorSource,
    GbmSelect,
    LassoSelect,
    PermutationThreshold,
    RfSelect,
    SelectionRun,
    StepwiseSelect,
    ThresholdRule,
    consolidate,
    default_method_spec,
    select_one,
    select_with_missing,
)
from .sim import (
    DgpSpec,
    Missingness,
    ScenarioSpec,
    SimResult,
    build_scenario_plan,
    generate,
    run_scenarios,
    scenario_transforms,
)
from .trees import Tree, grow_tree

__version__ = "0.1.0"

__all__ = [
    "AmputationPlan", "Pattern", "Tail", "ampute", "load_plan",
    "missingness_probs", "plan_from_config", "plan_to_config", "save_plan",
    "weighted_sum_scores",
    "ColumnKind", "DataMatrix", "DerivedColumn", "RngHandle", "TransformSpec",
    "load_csv", "save_csv",
    "BivselError", "CalibrationError", "FitError", "ImputationError",
    "ParseError", "PipelineError", "SchemaError", "SelectionError",
    "TransformError",
    "BartModel", "BartParams", "BoostModel", "ForestModel", "GbmParams",
    "fit_bart", "fit_crf", "fit_gbm", "fit_rf", "forest_oob_error",
    "gbm_importance", "logistic_grad_hess", "oob_importance",
    "BootstrapImputeSet", "ChainedEquations", "IterativeForest",
    "bootstrap_impute", "impute",
    "LassoPath", "LogisticFit", "StepwiseTrace", "fit_lasso_path",
    "fit_logistic", "lasso_select", "stepwise_select",
    "MetricsReport", "ReplicateScore", "TruthSpec", "aggregate", "score",
    "DEFAULT_PI", "METHOD_NAMES", "BartSelect", "CrfSelect",
    "EliminationSchedule", "ErrorSource", "GbmSelect", "LassoSelect",
    "PermutationThreshold", "RfSelect", "SelectionRun", "StepwiseSelect",
    "ThresholdRule", "consolidate", "default_method_spec", "select_one",
    "select_with_missing",
    "DgpSpec", "Missingness", "ScenarioSpec", "SimResult",
    "build_scenario_plan", "generate", "run_scenarios", "scenario_transforms",
    "Tree", "grow_tree",
    "__version__",
]
