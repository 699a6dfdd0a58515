"""Bayesian evaluation of order-constrained multinomial processing tree
models: EQN parsing, order-chain reparameterizations with adjusted beta
priors, posterior sampling, and marginal-likelihood estimation."""

from .inference import (
    BayesFactorResult,
    ImportanceConfig,
    MarginalLikelihoodEstimate,
    PosteriorChain,
    SamplerConfig,
    bayes_factor,
    estimate_ml_encompassing,
    estimate_ml_importance,
    sample_posterior,
)
from .model import (
    Branch,
    Dataset,
    EqnError,
    ModelError,
    MptModel,
    Parameter,
    Tree,
    load_eqn,
    parse_eqn,
    product_binomial_dataset,
    product_binomial_model,
)
from .priors import (
    PriorSpec,
    balanced,
    custom_beta,
    full_uniform,
    log_order_count,
    log_prior_density,
    marginal_balanced,
    marginal_balanced_cdf,
    marginal_unbalanced,
    marginal_unbalanced_cdf,
    reparam,
    sample_prior,
)
from .oracle import (
    OracleError,
    analytic_full_ml,
    grid_log_integral,
    grid_ml,
    rejection_sample_cone,
)
from .reparam import (
    ConstraintConfig,
    ConstraintError,
    OrderChain,
    check_chains,
    load_constraints,
    parse_constraints,
)

__version__ = "0.1.0"

__all__ = [
    "BayesFactorResult",
    "Branch",
    "ConstraintConfig",
    "ConstraintError",
    "Dataset",
    "EqnError",
    "ImportanceConfig",
    "MarginalLikelihoodEstimate",
    "ModelError",
    "MptModel",
    "OrderChain",
    "Parameter",
    "PosteriorChain",
    "PriorSpec",
    "SamplerConfig",
    "Tree",
    "balanced",
    "bayes_factor",
    "custom_beta",
    "OracleError",
    "analytic_full_ml",
    "check_chains",
    "estimate_ml_encompassing",
    "estimate_ml_importance",
    "full_uniform",
    "grid_log_integral",
    "grid_ml",
    "load_constraints",
    "load_eqn",
    "log_order_count",
    "log_prior_density",
    "marginal_balanced",
    "marginal_balanced_cdf",
    "marginal_unbalanced",
    "marginal_unbalanced_cdf",
    "parse_constraints",
    "parse_eqn",
    "product_binomial_dataset",
    "product_binomial_model",
    "rejection_sample_cone",
    "reparam",
    "sample_posterior",
    "sample_prior",
    "__version__",
]
