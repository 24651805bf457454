"""Dictionary update: damped Newton (IRLS) steps on one template at a time
under the Gaussian smoothness prior, followed by unit-norm projection.

The per-template objective, with codes and the other templates held
fixed, is the data negative log-likelihood plus the quadratic prior
h^T Sigma^{-1} h / 2.  Its gradient and Hessian reduce to segment
extraction and weighted Gram matrices of the event operators, so one
Newton step is a K x K solve.  For Gaussian observations a single
undamped step lands exactly on the ridge-regression solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .families import (
    GAUSSIAN,
    FamilySpec,
    inverse_link,
    neg_log_likelihood,
    variance_function,
)
from .kernels import CovarianceMatrix
from .signals import Dictionary, SparseCode, Trial, adjoint_extract, reconstruct, weighted_gram

_DEGENERATE_NORM = 1e-12
_MONOTONE_EPS = 1e-12


@dataclass(frozen=True)
class CduConfig:
    """Inner iteration count, Newton damping, and whether steps that fail
    to decrease the objective are halved away (backtracking)."""

    newton_iters: int = 3
    step_damping: float = 1.0
    backtrack: bool = True

    def __post_init__(self):
        if self.newton_iters < 1:
            raise ValueError("newton_iters must be >= 1")
        if not (0.0 < self.step_damping <= 1.0):
            raise ValueError("step_damping must be in (0, 1]")


@dataclass(frozen=True)
class UpdateResult:
    """Outcome of one template update.

    ``pre_normalization`` is the raw Newton result before the unit-norm
    projection (its norm is a useful diagnostic); ``degenerate`` marks
    templates with no supporting events, which are left unchanged.
    """

    template: np.ndarray
    pre_normalization: np.ndarray
    degenerate: bool = False
    stalled: bool = False


def _etas(dictionary: Dictionary, codes: list[SparseCode], trials: list[Trial]) -> list[np.ndarray]:
    return [
        reconstruct(dictionary, code, trial.baseline, trial.num_samples)
        for code, trial in zip(codes, trials)
    ]


def _weights(trial_weights, n: int):
    if trial_weights is None:
        return [1.0] * n
    return list(trial_weights)


def posterior_gradient(h_c: np.ndarray, c: int, dictionary: Dictionary,
                       codes: list[SparseCode], trials: list[Trial],
                       family: FamilySpec, cov: CovarianceMatrix,
                       trial_weights=None) -> np.ndarray:
    """Gradient of the per-template objective at h_c.

    -1/phi * sum_j X_c^T (y_j - mu_j)  +  Sigma^{-1} h_c, with the prior
    term computed by Cholesky solve.  ``dictionary`` supplies the other
    templates; its c-th row is ignored in favor of h_c.
    """
    work = _with_template(dictionary, c, h_c)
    K = dictionary.template_length
    if h_c.shape != (K,):
        raise ValueError(f"h_c must have shape ({K},)")
    grad = np.zeros(K)
    ws = _weights(trial_weights, len(trials))
    for w_j, code, trial, eta in zip(ws, codes, trials, _etas(work, codes, trials)):
        mu = inverse_link(family, eta)
        grad -= (w_j / family.dispersion) * adjoint_extract(
            code.events(c), trial.observations - mu, K)
    grad += cov.solve(h_c)
    return grad


def posterior_hessian(h_c: np.ndarray, c: int, dictionary: Dictionary,
                      codes: list[SparseCode], trials: list[Trial],
                      family: FamilySpec, cov: CovarianceMatrix,
                      trial_weights=None) -> np.ndarray:
    """Hessian: 1/phi * sum_j X_c^T diag(var(mu_j)) X_c  +  Sigma^{-1}."""
    work = _with_template(dictionary, c, h_c)
    K = dictionary.template_length
    H = cov.inverse()
    ws = _weights(trial_weights, len(trials))
    for w_j, code, trial, eta in zip(ws, codes, trials, _etas(work, codes, trials)):
        mu = inverse_link(family, eta)
        H += (w_j / family.dispersion) * weighted_gram(
            code.events(c), variance_function(family, mu), K)
    return H


def _with_template(dictionary: Dictionary, c: int, h_c: np.ndarray) -> Dictionary:
    t = np.array(dictionary.templates)
    t[c] = h_c
    return Dictionary(t)


def template_objective(h_c: np.ndarray, c: int, dictionary: Dictionary,
                       codes: list[SparseCode], trials: list[Trial],
                       family: FamilySpec, cov: CovarianceMatrix,
                       trial_weights=None) -> float:
    """Data NLL plus this template's prior quadratic, other templates fixed."""
    work = _with_template(dictionary, c, h_c)
    ws = _weights(trial_weights, len(trials))
    total = 0.5 * cov.inv_quadratic(h_c)
    for w_j, trial, eta in zip(ws, trials, _etas(work, codes, trials)):
        total += w_j * neg_log_likelihood(family, trial.observations, eta)
    return total


def map_objective(dictionary: Dictionary, codes: list[SparseCode], trials: list[Trial],
                  family: FamilySpec, covs: list[CovarianceMatrix],
                  trial_weights=None) -> float:
    """Full negative log-posterior: data NLL plus all template priors."""
    ws = _weights(trial_weights, len(trials))
    total = 0.0
    for w_j, trial, eta in zip(ws, trials, _etas(dictionary, codes, trials)):
        total += w_j * neg_log_likelihood(family, trial.observations, eta)
    for c in range(dictionary.num_templates):
        total += 0.5 * covs[c].inv_quadratic(dictionary.template(c))
    return total


def irls_update(h_c: np.ndarray, c: int, dictionary: Dictionary,
                codes: list[SparseCode], trials: list[Trial],
                family: FamilySpec, cov: CovarianceMatrix, cfg: CduConfig,
                trial_weights=None) -> UpdateResult:
    """Damped Newton steps on template c, then unit-norm projection.

    With backtracking, every inner step must lower the raw (unprojected)
    objective, and the projected result must not be worse than the
    incoming template; otherwise the incoming template is kept.
    """
    args = (c, dictionary, codes, trials, family, cov)
    kw = {"trial_weights": trial_weights}
    has_events = any(len(code.events(c)) > 0 for code in codes)
    h = np.asarray(h_c, dtype=float).copy()
    obj_in = template_objective(h, *args, **kw)
    obj = obj_in
    for _ in range(cfg.newton_iters):
        g = posterior_gradient(h, *args, **kw)
        H = posterior_hessian(h, *args, **kw)
        try:
            chol = scipy.linalg.cho_factor(H, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise RuntimeError(f"Hessian factorization failed for template {c}") from exc
        step = scipy.linalg.cho_solve(chol, g)
        if not cfg.backtrack:
            h = h - cfg.step_damping * step
            continue
        scale = cfg.step_damping
        accepted = False
        for _ in range(10):
            cand = h - scale * step
            cand_obj = template_objective(cand, *args, **kw)
            if cand_obj <= obj + _MONOTONE_EPS:
                h, obj, accepted = cand, cand_obj, True
                break
            scale *= 0.5
        if not accepted:
            break
    norm = float(np.linalg.norm(h))
    if not has_events or norm < _DEGENERATE_NORM:
        return UpdateResult(np.asarray(h_c, float).copy(), h, degenerate=True)
    unit = h / norm
    if cfg.backtrack:
        if template_objective(unit, *args, **kw) > obj_in + _MONOTONE_EPS:
            # The projection undid the gain; this only happens at
            # convergence, where keeping the incoming template is exact.
            return UpdateResult(np.asarray(h_c, float).copy(), h, stalled=True)
    return UpdateResult(unit, h)


def cyclic_update(dictionary: Dictionary, codes: list[SparseCode], trials: list[Trial],
                  family: FamilySpec, covs: list[CovarianceMatrix], cfg: CduConfig,
                  trial_weights=None) -> tuple[Dictionary, list[UpdateResult]]:
    """Update templates 0..C-1 in order, each seeing the freshest others."""
    if len(covs) != dictionary.num_templates:
        raise ValueError("need one covariance per template")
    work = Dictionary(np.array(dictionary.templates))
    results = []
    for c in range(dictionary.num_templates):
        res = irls_update(work.template(c), c, work, codes, trials, family,
                          covs[c], cfg, trial_weights=trial_weights)
        results.append(res)
        work = _with_template(work, c, res.template)
    return work, results
