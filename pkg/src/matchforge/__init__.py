"""Propensity-score matching with artificial-task (A2A) validation.

The package fits candidate propensity pipelines (logistic, chunked logistic,
random forest; raw or logit matching scale; greedy or optimal matcher),
checks them by covariate balance and by performance on constructed
zero-effect tasks, and selects among them with several strategies.
"""

from .a2a import (
    A2AResult,
    ArtificialTask,
    HillClimbConfig,
    build_artificial_task,
    compute_a2a,
    make_artificial_task,
    partition_loss,
    task_reference,
)
from .errors import (
    A2AUnavailableError,
    ConvergenceError,
    InfiniteEffectError,
    MatchforgeError,
    NoModelError,
    NoSelectionError,
    SchemaError,
    SingleArmError,
    UndefinedTauError,
    UnimputableError,
    ValidationError,
)
from .matching import MatchResult, extract_matched, match_nearest, match_optimal
from .metrics import (
    BalanceReport,
    FeatureBalance,
    ate,
    balance_report,
    cohens_d,
    cramers_v,
    kendall_tau,
)
from .pipeline import (
    MatchedEstimate,
    PipelineSpec,
    RunConfig,
    RunReport,
    default_grid,
    matched_ate_from_values,
    run_pipeline,
)
from .propensity import (
    DiagnosticScores,
    PropensityConfig,
    PropensityFit,
    clip_and_transform,
    cross_validate,
    fit_clr,
    fit_lr,
    fit_propensity,
    fit_rf,
    select_model,
)
from .strategy import (
    STRATEGIES,
    CandidateEvaluation,
    SelectionResult,
    dbscan,
    run_strategies,
    select_min_a2a,
    select_min_smd,
    select_pareto,
    select_smd_threshold,
    select_smd_x_a2a,
)
from .synth import SynthConfig, SynthTask, export_csv, feature_roles, generate, oracle_error
from .tabular import (
    ColumnSchema,
    Dataset,
    DesignMatrix,
    Population,
    encode,
    impute,
    load_csv,
    load_schema,
    split_by_treatment,
)

__version__ = "0.1.0"
