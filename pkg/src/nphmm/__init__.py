"""Penalized maximum likelihood for nonparametric hidden Markov models."""
from .fit import FitConfig, FitResult, fit_model
from .hmm import (
    GaussianEmission,
    HmmParams,
    log_likelihood,
    run_filter,
    sample_path,
    stationary_distribution,
    windowed_conditional_log_density,
)
from .model_space import (
    Constraints,
    EmissionMixture,
    ModelIndex,
    PenaltyConfig,
    b_gamma,
    emission_log_density,
    model_grid,
    penalty,
    project_transition,
)
from .select import SelectionReport, select_model
from .truth import (
    CompactKernelHmm,
    EvaluationChain,
    FiniteHmm,
    IidMixture,
    check_forgetting,
    estimate_prediction_error,
    forgetting_constants,
)

__version__ = "0.1.0"
