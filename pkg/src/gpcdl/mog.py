"""Mixture-of-Gaussians template baseline.

The parametric alternative to a learned template: h[k] is a sum of D
bells a_d * exp(-(k - mu_d)^2 / s_d^2).  Parameters are fit by
multi-start quasi-Newton maximum likelihood with event codes held fixed,
or by least squares against a target template.  Model order is picked by
the information criterion 2 * (3 D) - 2 * log-likelihood.
"""

from __future__ import annotations

import numpy as np
import scipy.optimize

from .families import FamilySpec, inverse_link, log_likelihood, neg_log_likelihood
from .signals import Dictionary, SparseCode, Trial, adjoint_extract, reconstruct

RESTARTS = 10


def mog_template(params: np.ndarray, K: int) -> np.ndarray:
    """Evaluate the mixture on sample grid 0..K-1; params rows are (a, mu, s2)."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    k = np.arange(K, dtype=float)
    h = np.zeros(K)
    for a, mu, s2 in params:
        h += a * np.exp(-((k - mu) ** 2) / s2)
    return h


def _unpack(x: np.ndarray, D: int) -> np.ndarray:
    # optimizer vector is (a, mu, log s2) per component
    p = x.reshape(D, 3).copy()
    p[:, 2] = np.exp(p[:, 2])
    return p


def _template_jacobian(x: np.ndarray, D: int, K: int) -> np.ndarray:
    """d h[k] / d x as a (3D, K) matrix, in optimizer coordinates."""
    k = np.arange(K, dtype=float)
    Jc = np.zeros((3 * D, K))
    for d in range(D):
        a, mu, logs2 = x[3 * d : 3 * d + 3]
        s2 = np.exp(logs2)
        e = np.exp(-((k - mu) ** 2) / s2)
        Jc[3 * d] = e
        Jc[3 * d + 1] = a * e * 2.0 * (k - mu) / s2
        Jc[3 * d + 2] = a * e * ((k - mu) ** 2) / s2  # chain rule through log s2
    return Jc


def _gradient_descent(objective, x0, lo, hi, max_iters: int = 2000, tol: float = 1e-10):
    """Projected gradient descent with an adaptive step.

    Deliberately plain: one descent direction, step halved on failure and
    grown on success, parameters clipped to their box after each move.
    """
    x = np.clip(x0, lo, hi)
    val, grad = objective(x)
    step = 0.1
    for _ in range(max_iters):
        moved = False
        for _ in range(30):
            cand = np.clip(x - step * grad, lo, hi)
            cand_val, cand_grad = objective(cand)
            if np.isfinite(cand_val) and cand_val < val - tol * max(1.0, abs(val)):
                x, val, grad = cand, cand_val, cand_grad
                step *= 1.2
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return x, val


def fit_mog(data, family: FamilySpec, D: int, *, codes: list[SparseCode] | None = None,
            template_index: int = 0, other_templates: Dictionary | None = None,
            K: int | None = None, restarts: int = RESTARTS, seed: int = 0):
    """Fit the D-component mixture; returns (params, unit-norm template).

    Two modes: a 1-D array target fits the template directly by least
    squares; a list of trials maximizes the data likelihood with the
    given codes fixed (the template enters through the convolutional
    reconstruction).  Every restart is deterministic in the seed; if no
    restart produces a finite objective the fit is reported as failed.
    """
    if D < 1:
        raise ValueError("D must be >= 1")

    if isinstance(data, np.ndarray) and data.ndim == 1:
        target = np.asarray(data, dtype=float)
        K = target.size

        def objective(x):
            resid = mog_template(_unpack(x, D), K) - target
            grad_h = 2.0 * resid
            return float(resid @ resid), _template_jacobian(x, D, K) @ grad_h

    else:
        trials: list[Trial] = list(data)
        if codes is None or K is None:
            raise ValueError("trial mode needs fixed codes and the template length K")

        def objective(x):
            h = mog_template(_unpack(x, D), K)
            if other_templates is not None:
                work = Dictionary(np.array(other_templates.templates))
                t = np.array(work.templates)
                t[template_index] = h
                work = Dictionary(t)
            else:
                work = Dictionary(h[None, :])
            total = 0.0
            grad_h = np.zeros(K)
            for code, trial in zip(codes, trials):
                eta = reconstruct(work, code, trial.baseline, trial.num_samples)
                total += neg_log_likelihood(family, trial.observations, eta)
                mu = inverse_link(family, eta)
                grad_h += adjoint_extract(
                    code.events(template_index),
                    (mu - trial.observations) / family.dispersion, K)
            return total, _template_jacobian(x, D, K) @ grad_h

    rng = np.random.default_rng(seed)
    # components are localized response lobes inside the window: centers
    # stay in [0, K) and widths at most about K/6, which rules out
    # modeling a plateau with the tail of an off-window or near-flat
    # component
    lo = np.tile([-np.inf, 0.0, np.log(1.0)], D)
    hi = np.tile([np.inf, K - 1.0, np.log(2.0 * (K / 6.0) ** 2)], D)
    best_x, best_val = None, np.inf
    for _ in range(restarts):
        x0 = np.zeros(3 * D)
        x0[0::3] = rng.normal(0.0, 1.0, size=D)
        x0[1::3] = rng.uniform(0.1 * K, 0.9 * K, size=D)
        x0[2::3] = np.log((K / 8.0) ** 2) + rng.normal(0.0, 0.3, size=D)
        x, val = _gradient_descent(objective, x0, lo, hi)
        if np.isfinite(val) and val < best_val:
            best_x, best_val = x, val
    if best_x is None:
        raise RuntimeError("all mixture fits diverged")
    params = _unpack(best_x, D)
    h = mog_template(params, K)
    norm = np.linalg.norm(h)
    if norm == 0.0:
        raise RuntimeError("mixture fit collapsed to the zero template")
    return params, h / norm


def mog_log_likelihood(params: np.ndarray, trials: list[Trial], codes: list[SparseCode],
                       family: FamilySpec, template_index: int = 0,
                       K: int | None = None) -> float:
    """Full data log-likelihood of a fitted (unnormalized) mixture template."""
    params = np.atleast_2d(params)
    if K is None:
        raise ValueError("K is required")
    work = Dictionary(mog_template(params, K)[None, :])
    total = 0.0
    for code, trial in zip(codes, trials):
        eta = reconstruct(work, code, trial.baseline, trial.num_samples)
        total += log_likelihood(family, trial.observations, eta)
    return total


def aic_select(candidates) -> int:
    """argmin over (D, log-likelihood) pairs of 2*(3D) - 2*ll; ties -> smaller D."""
    items = list(candidates)
    if not items:
        raise ValueError("empty candidate grid")
    return min(items, key=lambda item: (2.0 * 3.0 * item[0] - 2.0 * item[1], item[0]))[0]
