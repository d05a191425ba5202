"""Survival analysis with multi-expression Cox models evolved by NSGA-2."""

from ._core import (
    ConfigError,
    NotFitted,
    ParseError,
    SurvsrError,
    __version__,
    canonical_expression,
    concordance,
    evaluate_expression,
    fit_coxnet,
    fit_model,
    hypervolume,
    kaplan_meier,
    lambda_max,
    main,
    neg_log_partial_likelihood,
    run_method,
    synthesize,
)

__all__ = [
    "ConfigError",
    "NotFitted",
    "ParseError",
    "SurvsrError",
    "__version__",
    "canonical_expression",
    "concordance",
    "evaluate_expression",
    "fit_coxnet",
    "fit_model",
    "hypervolume",
    "kaplan_meier",
    "lambda_max",
    "main",
    "neg_log_partial_likelihood",
    "run_method",
    "synthesize",
]
