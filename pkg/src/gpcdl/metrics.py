"""Evaluation metrics: dictionary error, held-out predictive
log-likelihood, deviance pseudo-R^2, and the high-frequency dispersion
estimate.
"""

from __future__ import annotations

import numpy as np

from .coding import comp_encode
from .families import BERNOULLI, GAUSSIAN, FamilySpec, inverse_link, log_likelihood
from .signals import Trial, reconstruct


def dict_error(est: np.ndarray, truth: np.ndarray) -> float:
    """sqrt(1 - <est, truth>^2) after normalization; sign-flip invariant."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    ne, nt = np.linalg.norm(est), np.linalg.norm(truth)
    if ne == 0.0 or nt == 0.0:
        raise ValueError("dict_error is undefined for a zero template")
    inner = float(np.dot(est / ne, truth / nt))
    return float(np.sqrt(max(0.0, 1.0 - inner * inner)))


def estimate_dispersion(trial: Trial) -> float:
    """Mean periodogram power over normalized frequencies in [pi/2, pi].

    Smooth templates live at low frequency, so the upper half-band of a
    trial is essentially pure noise; for white noise of variance v the
    estimate is unbiased for v.
    """
    y = trial.observations
    N = y.size
    power = np.abs(np.fft.rfft(y)) ** 2 / N
    omega = 2.0 * np.pi * np.arange(power.size) / N
    band = (omega >= 0.5 * np.pi) & (omega <= np.pi)
    return float(power[band].mean())


def _test_etas(fit_result, test_trials: list[Trial], family: FamilySpec):
    """Natural parameters for held-out trials under a frozen fit.

    Shared-code fits reuse the single trained code (stimulus-locked
    trials); otherwise each test trial is re-encoded with the frozen
    dictionary and the training sparse-coding settings.
    """
    baseline = fit_result.baseline
    etas = []
    for t in test_trials:
        work = Trial(t.observations, baseline)
        if fit_result.shared_code:
            code = fit_result.codes[0]
        else:
            code = comp_encode(fit_result.dictionary, work, family, fit_result.config.csc)
        etas.append(reconstruct(fit_result.dictionary, code, baseline, work.num_samples))
    return etas


def predictive_ll(fit_result, test_trials: list[Trial], family: FamilySpec) -> float:
    """Mean per-sample log-likelihood (nats) of held-out trials."""
    etas = _test_etas(fit_result, test_trials, family)
    total = 0.0
    samples = 0
    for t, eta in zip(test_trials, etas):
        total += log_likelihood(family, t.observations, eta)
        samples += t.num_samples
    return total / samples


def _deviance(family: FamilySpec, y: np.ndarray, mu: np.ndarray) -> float:
    if family.kind == GAUSSIAN:
        return float(np.sum((y - mu) ** 2))
    mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
    return float(2.0 * np.sum(-y * np.log(mu) - (1.0 - y) * np.log(1.0 - mu)))


def r_squared(fit_result, test_trials: list[Trial], family: FamilySpec) -> float:
    """Deviance pseudo-R^2: 1 - D(model) / D(constant fit to the test data)."""
    etas = _test_etas(fit_result, test_trials, family)
    y_all = np.concatenate([t.observations for t in test_trials])
    mu_all = np.concatenate([inverse_link(family, eta) for eta in etas])
    null_mu = np.full_like(y_all, y_all.mean())
    if family.kind == BERNOULLI:
        null_mu = np.clip(null_mu, 1e-12, 1.0 - 1e-12)
    d_model = _deviance(family, y_all, mu_all)
    d_null = _deviance(family, y_all, null_mu)
    if d_null == 0.0:
        return 1.0 if d_model == 0.0 else -np.inf
    return 1.0 - d_model / d_null
