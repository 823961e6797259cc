"""Bayesian sequential experimental design for a partially linear model.

The package estimates the treatment effect theta in ``y = theta*t + f(x) + eps``
with a Gaussian process prior on f, and selects the next (covariate, arm)
observation by maximizing the information gain of the theta posterior.
"""

from .benchdata import (
    ColumnSchema,
    CounterfactualTable,
    estimate_noise_precision,
    load_table,
    observe_factual,
    resolve_schema,
    true_ate,
    write_table,
)
from .datagen import (
    ScmSpec,
    SyntheticWorld,
    gen_world,
    make_counterfactual_table,
    mc_ace_check,
    mc_observational_difference,
    observe_outcome,
    with_theta,
)
from .design import (
    CandidatePool,
    DesignChoice,
    DesignStats,
    PoolScores,
    ScoreCache,
    candidate_precision,
    information_gain,
    naive_candidate_precision,
    pool_remove,
    score_pool,
    select_optimal,
    select_random,
)
from .errors import (
    BookkeepingError,
    ConfigError,
    EstimationError,
    FactorizationError,
    ParameterError,
    ParseError,
    PoolExhaustedError,
    SchemaError,
    ShapeError,
    SingularExtensionError,
)
from .experiment import (
    ErrorCurveSet,
    ExperimentConfig,
    config_from_mapping,
    default_config,
    export_curves,
    load_config,
    run_experiment,
    run_replication,
    summary_lines,
)
from .kernels import (
    CholeskyFactor,
    Kernel,
    extend_factorization,
    factorize_spd,
    gram_matrix,
    kernel_cross,
    kernel_diag,
    kernel_eval,
)
from .posterior import (
    ObservationSet,
    PosteriorState,
    PriorSpec,
    entropy,
    grid_bayes_oracle,
    posterior_append,
    posterior_batch,
    posterior_init,
    predictive_y,
)

__version__ = "0.1.0"

__all__ = [
    # kernels
    "Kernel", "CholeskyFactor", "kernel_eval", "kernel_cross", "kernel_diag",
    "gram_matrix", "factorize_spd", "extend_factorization",
    # posterior
    "PriorSpec", "ObservationSet", "PosteriorState", "posterior_init",
    "posterior_batch", "posterior_append", "entropy", "predictive_y",
    "grid_bayes_oracle",
    # design
    "CandidatePool", "DesignChoice", "DesignStats", "PoolScores", "ScoreCache",
    "pool_remove", "candidate_precision", "information_gain",
    "naive_candidate_precision", "score_pool", "select_optimal", "select_random",
    # data generation
    "SyntheticWorld", "ScmSpec", "gen_world", "observe_outcome", "with_theta",
    "mc_ace_check", "mc_observational_difference", "make_counterfactual_table",
    # benchmark tables
    "ColumnSchema", "CounterfactualTable", "resolve_schema", "load_table",
    "write_table", "true_ate", "observe_factual", "estimate_noise_precision",
    # experiments
    "ExperimentConfig", "ErrorCurveSet", "default_config", "config_from_mapping",
    "load_config", "run_replication", "run_experiment", "export_curves",
    "summary_lines",
    # errors
    "ShapeError", "ParameterError", "FactorizationError", "SingularExtensionError",
    "PoolExhaustedError", "BookkeepingError", "SchemaError", "ParseError",
    "EstimationError", "ConfigError",
    "__version__",
]
