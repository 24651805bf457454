"""Matérn covariance kernels, their spectra, and template prior matrices.

A smoothness prior on a length-K template is a zero-mean Gaussian with a
K x K stationary covariance, sampled from a Matérn kernel at spacing
``delta``.  Only the half-integer orders nu in {1/2, 3/2, 5/2} are
supported, which keeps both the kernel and its power spectral density in
closed form.  Frequencies are normalized (radians per sample), so the
lengthscale enters everywhere in units of samples, l / delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

MATERN_ORDERS = (0.5, 1.5, 2.5)

# Relative diagonal jitter applied to every constructed covariance: the
# learning updates solve against the prior, and large lengthscales make
# the plain kernel matrix numerically singular.
JITTER = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Matérn kernel parameters: order nu, variance, lengthscale, sample spacing."""

    nu: float
    variance: float
    lengthscale: float
    delta: float = 1.0

    def __post_init__(self):
        if self.nu not in MATERN_ORDERS:
            raise ValueError(f"nu must be one of {MATERN_ORDERS}, got {self.nu}")
        if not (self.variance > 0 and self.lengthscale > 0 and self.delta > 0):
            raise ValueError("variance, lengthscale and delta must be positive")

    def with_params(self, lengthscale=None, variance=None) -> "KernelSpec":
        return KernelSpec(
            self.nu,
            self.variance if variance is None else variance,
            self.lengthscale if lengthscale is None else lengthscale,
            self.delta,
        )


def matern_value(spec: KernelSpec, tau) -> np.ndarray:
    """Kernel value at lag tau (same time units as lengthscale)."""
    r = np.abs(np.asarray(tau, dtype=float)) / spec.lengthscale
    if spec.nu == 0.5:
        shape = np.exp(-r)
    elif spec.nu == 1.5:
        a = math.sqrt(3.0) * r
        shape = (1.0 + a) * np.exp(-a)
    else:
        a = math.sqrt(5.0) * r
        shape = (1.0 + a + a * a / 3.0) * np.exp(-a)
    return spec.variance * shape


def matern_psd(spec: KernelSpec, omegas) -> np.ndarray:
    """Kernel power spectral density at normalized frequencies in [-pi, pi].

    This is the continuous-time transform evaluated at omega / delta and
    rescaled to per-sample frequency; aliasing from sampling is ignored,
    which is accurate once the lengthscale spans a couple of samples.
    """
    omegas = np.asarray(omegas, dtype=float)
    if np.any(np.abs(omegas) > math.pi + 1e-12):
        raise ValueError("frequencies must lie in [-pi, pi]")
    ls = spec.lengthscale / spec.delta  # lengthscale in samples
    w2 = omegas * omegas
    if spec.nu == 0.5:
        return 2.0 * spec.variance * ls / (1.0 + ls * ls * w2)
    if spec.nu == 1.5:
        return (4.0 / math.sqrt(3.0)) * spec.variance * ls / (1.0 + ls * ls * w2 / 3.0) ** 2
    return (16.0 / (3.0 * math.sqrt(5.0))) * spec.variance * ls / (1.0 + ls * ls * w2 / 5.0) ** 3


@dataclass(frozen=True)
class CovarianceMatrix:
    """Immutable K x K template prior covariance with a cached Cholesky factor.

    The inverse is never formed; solves go through the lower factor.
    ``spec`` is None for covariances not built from a Matérn kernel
    (e.g. the white/diagonal prior).
    """

    entries: np.ndarray
    spec: KernelSpec | None = None
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_chol", scipy.linalg.cholesky(entries, lower=True))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Sigma^{-1} b via the Cholesky factor."""
        return scipy.linalg.cho_solve((self._chol, True), b)

    def inv_quadratic(self, h: np.ndarray) -> float:
        """h^T Sigma^{-1} h."""
        w = scipy.linalg.solve_triangular(self._chol, h, lower=True)
        return float(np.dot(w, w))

    def inverse(self) -> np.ndarray:
        """Dense Sigma^{-1}, for assembling Newton systems (K is small)."""
        return self.solve(np.eye(self.size))

    def cholesky_lower(self) -> np.ndarray:
        return self._chol.copy()

    def is_diagonal(self) -> bool:
        off = self.entries - np.diag(np.diagonal(self.entries))
        return not np.any(off)


def matern_cov(spec: KernelSpec, K: int) -> CovarianceMatrix:
    """Toeplitz prior covariance: kernel at lags |k - k'| delta, plus jitter."""
    if K < 1:
        raise ValueError("K must be >= 1")
    lags = np.arange(K, dtype=float) * spec.delta
    row = matern_value(spec, lags)
    entries = scipy.linalg.toeplitz(row)
    entries[np.diag_indices(K)] += JITTER * spec.variance
    return CovarianceMatrix(entries, spec)


def white_cov(variance: float, K: int) -> CovarianceMatrix:
    """Diagonal (Tikhonov) prior: variance * I, flat spectrum."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    return CovarianceMatrix(variance * np.eye(K), None)


def _wrapped_row(row: np.ndarray) -> np.ndarray:
    """Symmetric circulant generator: c[k] = row[min(k, K-k)]."""
    K = row.size
    idx = np.minimum(np.arange(K), K - np.arange(K))
    return row[idx]


def circulant_matern_cov(spec: KernelSpec, K: int) -> CovarianceMatrix:
    """Circulant wrap of the Matérn kernel on K points, plus jitter.

    Its eigenvectors are exactly the DFT basis, so the spectral shrinkage
    identities that hold only approximately for the Toeplitz prior become
    exact with this construction.
    """
    lags = np.arange(K, dtype=float) * spec.delta
    c = _wrapped_row(matern_value(spec, lags))
    # the raw wrap can carry slightly negative eigenvalues when the kernel
    # has not decayed by lag K/2; clip the spectrum, then add the jitter as
    # a uniform eigenvalue shift (same as diagonal jitter)
    lam = np.maximum(np.real(np.fft.fft(c)), 0.0) + JITTER * spec.variance
    row = np.real(np.fft.ifft(lam))
    entries = scipy.linalg.circulant(row)  # symmetric because row is wrap-symmetric
    return CovarianceMatrix(entries, spec)


def covariance_spectrum(cov: CovarianceMatrix) -> np.ndarray:
    """Eigenvalues of the circulant embedding of ``cov`` at DFT frequencies.

    Exact for circulant matrices; for Toeplitz input this is the standard
    circulant approximation (FFT of the symmetrically wrapped first row).
    """
    c = _wrapped_row(cov.entries[0].copy())
    return np.real(np.fft.fft(c))


def spectral_factorization(cov: CovarianceMatrix) -> np.ndarray:
    """Approximate prior eigenvalues: PSD sampled at omega_k = 2 pi k / K.

    Frequencies above pi wrap to their negative alias.  The values are
    rescaled so their sum matches trace(Sigma), pinning the total prior
    power to the matrix actually used by the solver.  A diagonal
    covariance short-circuits to an exactly flat spectrum.
    """
    K = cov.size
    if cov.is_diagonal() or cov.spec is None:
        return np.full(K, np.trace(cov.entries) / K)
    k = np.arange(K)
    omega = 2.0 * math.pi * k / K
    omega = np.where(omega > math.pi, omega - 2.0 * math.pi, omega)
    values = matern_psd(cov.spec, omega)
    values *= np.trace(cov.entries) / np.sum(values)
    return values
