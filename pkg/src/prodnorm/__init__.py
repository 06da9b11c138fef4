"""Operator norms of products of random and all-ones matrices.

The package predicts how the max-row-sum operator norm of a chain of iid
random matrices and all-ones blocks grows with the dimensions, and verifies
every prediction by exact identities and reproducible Monte Carlo runs.
"""

__version__ = "0.1.0"

from .backend import active_backend, available_backends, use_backend
from .expr import (
    BaseCase,
    Coeff,
    DimChainError,
    ExprSyntaxError,
    Factor,
    ProductExpr,
    canonicalize,
    classify_base_case,
    decompose_noncentered,
    expression,
    format_expr,
    one_factor,
    parse_expression,
    random_factor,
    split_at_ones,
)
from .harness import (
    AssertionSpec,
    ConfigError,
    ConvergenceReport,
    ExperimentConfig,
    config_from_mapping,
    instantiate_factors,
    normalized_statistic,
    resolve_dims,
    run_clt,
    run_convergence,
    run_counterexample,
    run_max_row_stat,
    sample_norm,
)
from .laws import (
    EntryLaw,
    abs_moment,
    format_law,
    gaussian,
    heavy_tail,
    parse_law,
    rademacher,
    standard_gaussian,
    standardize,
    uniform_sym,
)
from .matrix import (
    Matrix,
    brute_force_inf_norm,
    identity,
    inf_op_norm,
    l1_op_norm,
    matmul_chain,
    one_matrix,
)
from .predict import (
    AsymptoticPrediction,
    FluctuationClass,
    PredictionRefused,
    PredictionResult,
    predict,
    predict_asymptotics,
)
from .rng import stream
from .stein import (
    SteinCheck,
    WeightedSumSpec,
    ks_statistic,
    stein_bound,
    verify_stein,
    w1_empirical,
)
