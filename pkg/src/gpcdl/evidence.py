"""Marginal-likelihood estimation of the kernel hyperparameters.

The evidence of the kernel parameters, with templates integrated out, is
approximated by a Gaussian expansion of the unnormalized posterior around
the current template estimate:

    log evidence ~= -1/2 log det(I + L^T B L) - 1/2 h^T Sigma^{-1} h
                    + sum_j log p(y_j | h)

with h the stacked templates, Sigma the block-diagonal prior (L its
Cholesky factor), and B the stacked event-weighted Gram (the data block
of the objective Hessian).  The expression is exact for Gaussian
observations when h is the posterior mode.

One estimation step alternates sparse coding and a dictionary update
with the current kernel parameters, evaluates the evidence, and ascends
the parameters in log-space along a central finite-difference gradient,
halving the step until the evidence does not decrease.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .coding import comp_encode, comp_encode_pooled
from .families import FamilySpec, inverse_link, log_likelihood, variance_function
from .kernels import KernelSpec, matern_cov
from .learning import ExperimentConfig
from .signals import Dictionary, SparseCode, Trial, reconstruct, weighted_cross_gram
from .update import cyclic_update

_FD_EPS = 1e-4
_ACCEPT_EPS = 1e-12


@dataclass(frozen=True)
class HyperState:
    """Per-template (lengthscale, variance) pairs plus the ascent bookkeeping.

    Parameters stay positive because all moves happen in log-space.
    """

    theta: tuple[tuple[float, float], ...]
    marginal_ll_trace: tuple[float, ...] = ()
    step_size: float = 0.1
    iteration: int = 0

    def __post_init__(self):
        for length, var in self.theta:
            if not (length > 0 and var > 0):
                raise ValueError("lengthscales and variances must stay positive")

    def kernel_specs(self, base: tuple[KernelSpec, ...]) -> tuple[KernelSpec, ...]:
        return tuple(
            spec.with_params(lengthscale=t[0], variance=t[1])
            for spec, t in zip(base, self.theta)
        )

    @staticmethod
    def from_specs(specs, step_size: float = 0.1) -> "HyperState":
        return HyperState(tuple((s.lengthscale, s.variance) for s in specs),
                          step_size=step_size)


def laplace_marginal_ll(trials: list[Trial], dictionary: Dictionary,
                        codes: list[SparseCode], family: FamilySpec,
                        kernel_specs, trial_weights=None) -> float:
    """Evidence of the kernel parameters at the given template estimate."""
    K = dictionary.template_length
    C = dictionary.num_templates
    covs = [matern_cov(spec, K) for spec in kernel_specs]
    weights = [1.0] * len(trials) if trial_weights is None else list(trial_weights)

    B = np.zeros((C * K, C * K))
    loglik = 0.0
    for w_j, code, trial in zip(weights, codes, trials):
        eta = reconstruct(dictionary, code, trial.baseline, trial.num_samples)
        mu = inverse_link(family, eta)
        var = variance_function(family, mu)
        loglik += w_j * log_likelihood(family, trial.observations, eta)
        for c in range(C):
            for c2 in range(c, C):
                block = weighted_cross_gram(code.events(c), code.events(c2), var, K)
                block *= w_j / family.dispersion
                B[c * K:(c + 1) * K, c2 * K:(c2 + 1) * K] += block
                if c2 != c:
                    B[c2 * K:(c2 + 1) * K, c * K:(c + 1) * K] += block.T

    # log det(I + Sigma B) through the symmetric form I + L^T B L
    L = scipy.linalg.block_diag(*[cov.cholesky_lower() for cov in covs])
    M = np.eye(C * K) + L.T @ B @ L
    chol = scipy.linalg.cholesky(M, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(chol))))

    prior_quad = sum(
        covs[c].inv_quadratic(dictionary.template(c)) for c in range(C))
    return -0.5 * logdet - 0.5 * prior_quad + loglik


def _encode_all(dictionary: Dictionary, trials, family, cfg: ExperimentConfig):
    """CSC pass matching the fit loop's pooling behaviour.

    Returns (codes, effective trials, weights); pooled mode collapses the
    trials into their average with the trial count as weight.
    """
    if cfg.shared_code:
        code = comp_encode_pooled(dictionary, trials, family, cfg.csc)
        y_bar = np.mean([t.observations for t in trials], axis=0)
        pooled = Trial(y_bar, trials[0].baseline)
        return [code], [pooled], [float(len(trials))]
    codes = [comp_encode(dictionary, t, family, cfg.csc) for t in trials]
    return codes, list(trials), None


def hyper_step(state: HyperState, trials: list[Trial], dictionary: Dictionary,
               family: FamilySpec, learn_cfg: ExperimentConfig):
    """One alternating estimation step; returns (state, dictionary, codes).

    The evidence trace cannot decrease at the ascent stage: a parameter
    move is only kept if the evidence at the refreshed templates does not
    drop, and a fully rejected move leaves the parameters in place.
    """
    base_specs = tuple(learn_cfg.kernel_specs)
    specs = state.kernel_specs(base_specs)
    K = dictionary.template_length

    codes, eff_trials, weights = _encode_all(dictionary, trials, family, learn_cfg)
    covs = [matern_cov(spec, K) for spec in specs]
    dictionary, _ = cyclic_update(dictionary, codes, eff_trials, family, covs,
                                  learn_cfg.cdu, trial_weights=weights)

    def evidence(theta_log: np.ndarray) -> float:
        flat = np.exp(theta_log)
        trial_specs = tuple(
            spec.with_params(lengthscale=flat[2 * c], variance=flat[2 * c + 1])
            for c, spec in enumerate(base_specs))
        return laplace_marginal_ll(eff_trials, dictionary, codes, family,
                                   trial_specs, trial_weights=weights)

    theta_log = np.log(np.asarray(state.theta, dtype=float).ravel())
    current = evidence(theta_log)

    if state.step_size == 0.0:
        new_state = HyperState(state.theta, state.marginal_ll_trace + (current,),
                               state.step_size, state.iteration + 1)
        return new_state, dictionary, codes

    grad = np.zeros_like(theta_log)
    for i in range(theta_log.size):
        bump = np.zeros_like(theta_log)
        bump[i] = _FD_EPS
        grad[i] = (evidence(theta_log + bump) - evidence(theta_log - bump)) / (2 * _FD_EPS)

    step = state.step_size
    accepted = current
    theta_new = theta_log
    for _ in range(20):
        cand = theta_log + step * grad
        value = evidence(cand)
        if value >= current - _ACCEPT_EPS:
            theta_new, accepted = cand, value
            break
        step *= 0.5

    flat = np.exp(theta_new)
    theta = tuple((float(flat[2 * c]), float(flat[2 * c + 1]))
                  for c in range(len(base_specs)))
    new_state = HyperState(theta, state.marginal_ll_trace + (accepted,),
                           step, state.iteration + 1)
    return new_state, dictionary, codes


def estimate_hyperparameters(cfg: ExperimentConfig, trials: list[Trial],
                             dictionary: Dictionary, max_steps: int = 50,
                             step_size: float = 0.1, tol: float = 1e-6):
    """Drive ``hyper_step`` to convergence of the evidence trace."""
    state = HyperState.from_specs(cfg.kernel_specs, step_size=step_size)
    codes: list[SparseCode] = []
    for _ in range(max_steps):
        state, dictionary, codes = hyper_step(state, trials, dictionary, family=cfg.family,
                                              learn_cfg=cfg)
        trace = state.marginal_ll_trace
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            break
    return state, dictionary, codes
