"""Convolutional dictionary learning with Gaussian-process smoothness
priors, for Gaussian and Bernoulli observations."""

__version__ = "0.1.0"

from .coding import CscConfig, comp_encode, comp_encode_pooled, nll_threshold_from_baseline
from .families import (
    BERNOULLI,
    GAUSSIAN,
    FamilySpec,
    inverse_link,
    link,
    link_derivative_inverse,
    log_likelihood,
    neg_log_likelihood,
)
from .kernels import (
    CovarianceMatrix,
    KernelSpec,
    circulant_matern_cov,
    covariance_spectrum,
    matern_cov,
    matern_psd,
    spectral_factorization,
    white_cov,
)
from .learning import (
    DegenerateDictionaryError,
    ExperimentConfig,
    FitResult,
    cross_validate,
    fit,
)
from .metrics import dict_error, estimate_dispersion, predictive_ll, r_squared
from .mog import aic_select, fit_mog, mog_template
from .signals import Dictionary, Event, SparseCode, Trial, adjoint_extract, reconstruct, weighted_gram
from .simulate import SimSpec, gen_bernoulli_dataset, gen_gaussian_dataset, perturbed_init
from .spectral import (
    SpectralReport,
    build_spectral_report,
    code_snr,
    general_case_gains,
    wiener_gains,
    wiener_predicted_template,
)
from .update import CduConfig, cyclic_update, irls_update, posterior_gradient, posterior_hessian
from .evidence import HyperState, estimate_hyperparameters, hyper_step, laplace_marginal_ll
