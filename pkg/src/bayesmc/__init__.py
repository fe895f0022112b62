"""Bayesian linear and neural-network models trained by MCMC.

The package trains Bayesian linear models and single-hidden-layer neural
networks with random-walk or Langevin-gradient Metropolis-Hastings, runs
multiple chains, and checks convergence with rank-normalized split R-hat.
Use the library directly, the ``bayesmc`` CLI, or the FastAPI service.
"""

__version__ = "0.1.0"

from .errors import (
    BayesmcError,
    DataError,
    DimensionError,
    InvalidParameterError,
    NumericalError,
    UndefinedDiagnosticError,
)
from .distributions import (
    binomial_logpmf,
    gaussian_logpdf,
    invgamma_unnorm_logpdf,
    isotropic_gaussian_logratio_core,
    sigmoid,
    softmax,
)
from .models import (
    DEFAULT_HIDDEN_NUM,
    LinearModel,
    ModelSpec,
    NeuralNetwork,
    build_model,
    classify,
    langevin_gradient,
    param_names,
)
from .sampling import (
    Chain,
    ChainSet,
    FAMILY_DEFAULTS,
    SamplerConfig,
    gaussian_log_likelihood,
    multinomial_log_likelihood,
    classification_log_prior,
    regression_log_prior,
    mh_accept,
    rw_propose,
    eta_propose,
    langevin_propose,
    run_chain,
    run_multi_chain,
    sample_binomial_demo,
)
from .diagnostics import (
    PredictionBand,
    accuracy,
    mcse_batch_means,
    model_draws,
    posterior_summary,
    rhat_classic,
    rmse,
    split_rhat,
    thin,
)
from .data import (
    Dataset,
    EmbeddingConfig,
    build_dataset,
    load_benchmark,
    load_csv,
    load_dataset,
    minmax_normalize,
    denormalize_target,
    save_dataset,
    takens_embed,
    train_test_split,
)

__all__ = [
    "__version__",
    "BayesmcError", "DataError", "DimensionError", "InvalidParameterError",
    "NumericalError", "UndefinedDiagnosticError",
    "binomial_logpmf", "gaussian_logpdf", "invgamma_unnorm_logpdf",
    "isotropic_gaussian_logratio_core", "sigmoid", "softmax",
    "DEFAULT_HIDDEN_NUM", "LinearModel", "ModelSpec", "NeuralNetwork",
    "build_model", "classify", "langevin_gradient", "param_names",
    "Chain", "ChainSet", "FAMILY_DEFAULTS", "SamplerConfig",
    "gaussian_log_likelihood", "multinomial_log_likelihood",
    "classification_log_prior", "regression_log_prior", "mh_accept",
    "rw_propose", "eta_propose", "langevin_propose",
    "run_chain", "run_multi_chain", "sample_binomial_demo",
    "PredictionBand", "accuracy", "mcse_batch_means", "model_draws",
    "posterior_summary", "rhat_classic", "rmse", "split_rhat", "thin",
    "Dataset", "EmbeddingConfig", "build_dataset", "load_benchmark",
    "load_csv", "load_dataset", "minmax_normalize", "denormalize_target",
    "save_dataset", "takens_embed", "train_test_split",
]
