"""glmmkit: Bayesian generalized linear multilevel models from model formulas.

Parse Wilkinson-style formulas, build full-rank design matrices with
group-specific blocks, derive weakly-informative default priors, sample
with adaptive dynamic Hamiltonian Monte Carlo, and summarize, predict,
and transform the posterior.
"""

from .diagnostics import (
    SummaryTable,
    ess,
    hdi,
    mcse,
    r_hat,
    rank_histogram_data,
    summarize,
)
from .design import (
    DesignMatrices,
    TransformState,
    apply_transforms,
    build_design,
    build_for_prediction,
    build_group_block,
    encode_term,
)
from .errors import (
    DataError,
    DesignError,
    FamilyError,
    FitError,
    FormulaError,
    GlmmkitError,
    PriorError,
)
from .families import (
    FAMILIES,
    LINKS,
    Family,
    Link,
    dloglik_daux,
    dloglik_dmu,
    get_family,
    get_link,
    log_likelihood,
    sample_response,
)
from .formula import FormulaAst, GroupTerm, Term, TermSet, parse, parse_terms, resolve
from .model import Model, build_model, describe_model, from_manifest, to_manifest
from .posthoc import (
    OlsFit,
    PartialCorrDraws,
    exceedance_probability,
    ols_fit,
    partial_corr_transform,
)
from .predict import predict_mean, predict_pps
from .priors import (
    Prior,
    PriorSet,
    apply_overrides,
    default_auxiliary_priors,
    default_group_sd_prior,
    default_intercept_prior,
    default_slope_prior,
    log_prior,
    sample_priors,
)
from .sampler import (
    PosteriorDraws,
    fit,
    grad_log_posterior,
    initialize,
    log_likelihood_part,
    log_posterior,
)
from .tabular import (
    ColumnStats,
    DataTable,
    column_stats,
    drop_incomplete,
    read_csv,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnStats", "DataError", "DataTable", "DesignError", "DesignMatrices",
    "FAMILIES", "Family", "FamilyError", "FitError", "FormulaAst",
    "FormulaError", "GlmmkitError", "GroupTerm", "LINKS", "Link", "Model",
    "OlsFit", "PartialCorrDraws", "PosteriorDraws", "Prior", "PriorError",
    "PriorSet", "SummaryTable", "Term", "TermSet", "TransformState",
    "apply_overrides", "apply_transforms", "build_design",
    "build_for_prediction", "build_group_block", "build_model",
    "column_stats", "default_auxiliary_priors", "default_group_sd_prior",
    "default_intercept_prior", "default_slope_prior", "describe_model",
    "dloglik_daux", "dloglik_dmu", "drop_incomplete", "encode_term", "ess",
    "exceedance_probability", "fit", "from_manifest", "get_family",
    "get_link", "grad_log_posterior", "hdi", "initialize", "log_likelihood",
    "log_likelihood_part", "log_posterior", "log_prior", "mcse", "ols_fit",
    "parse", "parse_terms", "partial_corr_transform", "predict_mean",
    "predict_pps", "r_hat", "rank_histogram_data", "read_csv", "resolve",
    "sample_priors", "sample_response", "summarize", "to_manifest",
    "write_csv",
]
