"""Natural-exponential-family observation models.

Each family is identified by its canonical link f and cumulant b: the
negative log-likelihood of a trial, as a function of the natural
parameter eta = f(mu), is

    nll(y, eta) = (-eta @ y + sum(b(eta))) / dispersion

up to an additive term that depends only on (y, dispersion) and is
therefore irrelevant to every quantity optimized here.  That constant
is available separately (``log_partition_constant``) for metrics that
need properly normalized log-probabilities.

Gaussian uses the identity link with b(eta) = eta^2 / 2 and dispersion
equal to the noise variance; Bernoulli uses the logit link with
b(eta) = log(1 + exp(eta)) and dispersion fixed at 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class FamilySpec:
    """Observation family: kind plus dispersion (noise variance for Gaussian)."""

    kind: str
    dispersion: float = 1.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown family kind: {self.kind!r}")
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")
        if self.kind == BERNOULLI and self.dispersion != 1.0:
            raise ValueError("Bernoulli dispersion is fixed at 1")

    def with_dispersion(self, dispersion: float) -> "FamilySpec":
        return FamilySpec(self.kind, dispersion)


def _check_bernoulli_mean(mu: np.ndarray) -> None:
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise ValueError("Bernoulli mean must lie strictly in (0, 1)")


def link(spec: FamilySpec, mu) -> np.ndarray:
    """Canonical link eta = f(mu): identity (Gaussian) or logit (Bernoulli)."""
    mu = np.asarray(mu, dtype=float)
    if spec.kind == GAUSSIAN:
        return mu.copy()
    _check_bernoulli_mean(mu)
    return np.log(mu / (1.0 - mu))


def inverse_link(spec: FamilySpec, eta) -> np.ndarray:
    """Mean mu = f^{-1}(eta): identity or logistic sigmoid."""
    eta = np.asarray(eta, dtype=float)
    if spec.kind == GAUSSIAN:
        return eta.copy()
    # expit via the stable two-branch form
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def link_derivative_inverse(spec: FamilySpec, mu) -> np.ndarray:
    """Elementwise (f'(mu))^{-1}: ones for Gaussian, mu(1-mu) for Bernoulli.

    This is the variance function of the family and the IRLS weight.
    """
    mu = np.asarray(mu, dtype=float)
    if spec.kind == GAUSSIAN:
        return np.ones_like(mu)
    _check_bernoulli_mean(mu)
    return mu * (1.0 - mu)


def variance_function(spec: FamilySpec, mu) -> np.ndarray:
    """Like ``link_derivative_inverse`` but tolerant of saturated means.

    Internal iterations can push a Bernoulli mean to exactly 0 or 1 in
    float arithmetic; the weight there is simply 0, not a domain error.
    """
    mu = np.asarray(mu, dtype=float)
    if spec.kind == GAUSSIAN:
        return np.ones_like(mu)
    return mu * (1.0 - mu)


def _softplus(eta: np.ndarray) -> np.ndarray:
    # max(eta, 0) + log1p(exp(-|eta|)) never overflows
    return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))


def cumulant(spec: FamilySpec, eta) -> np.ndarray:
    """b(eta): eta^2/2 for Gaussian, softplus(eta) for Bernoulli."""
    eta = np.asarray(eta, dtype=float)
    if spec.kind == GAUSSIAN:
        return 0.5 * eta * eta
    return _softplus(eta)


def neg_log_likelihood(spec: FamilySpec, y, eta) -> float:
    """(-eta @ y + sum b(eta)) / dispersion, the data-fit term of the objective.

    Omits the (y, dispersion)-only constant; see ``log_partition_constant``.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.shape != eta.shape:
        raise ValueError(f"y has shape {y.shape} but eta has shape {eta.shape}")
    return float((-np.dot(eta, y) + np.sum(cumulant(spec, eta))) / spec.dispersion)


def pointwise_neg_log_likelihood(spec: FamilySpec, y, eta) -> np.ndarray:
    """Per-sample contributions (-eta_i y_i + b(eta_i)) / dispersion."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.shape != eta.shape:
        raise ValueError(f"y has shape {y.shape} but eta has shape {eta.shape}")
    return (-eta * y + cumulant(spec, eta)) / spec.dispersion


def saturated_neg_log_likelihood(spec: FamilySpec, y) -> float:
    """NLL of the best achievable fit (eta matching y exactly).

    Subtracting this puts NLL values on the deviance scale, which is
    nonnegative and comparable across trials; that is the scale used for
    sparse-coding stop thresholds.  Zero for Bernoulli outcomes in
    {0, 1}; -||y||^2 / (2 phi) for Gaussian.
    """
    y = np.asarray(y, dtype=float)
    if spec.kind == BERNOULLI:
        return 0.0
    return float(-0.5 * np.dot(y, y) / spec.dispersion)


def pointwise_deviance(spec: FamilySpec, y, eta) -> np.ndarray:
    """Per-sample NLL above the saturated fit; (y-eta)^2/(2 phi) for Gaussian."""
    out = pointwise_neg_log_likelihood(spec, y, eta)
    if spec.kind == GAUSSIAN:
        y = np.asarray(y, dtype=float)
        out = out + 0.5 * y * y / spec.dispersion
    return out


def log_partition_constant(spec: FamilySpec, y) -> float:
    """The additive log-likelihood term dropped by ``neg_log_likelihood``.

    full log p(y | eta) = -neg_log_likelihood(y, eta) + log_partition_constant(y).
    Zero for Bernoulli; for Gaussian it carries the normalizer and the
    -||y||^2 / (2 phi) piece.
    """
    y = np.asarray(y, dtype=float)
    if spec.kind == BERNOULLI:
        return 0.0
    phi = spec.dispersion
    return float(-0.5 * np.dot(y, y) / phi - 0.5 * y.size * math.log(2.0 * math.pi * phi))


def log_likelihood(spec: FamilySpec, y, eta) -> float:
    """Fully normalized log p(y | eta)."""
    return -neg_log_likelihood(spec, y, eta) + log_partition_constant(spec, y)
