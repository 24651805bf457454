"""Frequency-domain view of the regularized dictionary update.

For Gaussian observations with non-overlapping events, the updated
template equals a Wiener filter applied to the unregularized estimate:
per DFT frequency, the spectrum is shrunk by

    gain_k = psd_k / (psd_k + 1 / code_snr)

where psd_k is the prior spectrum and code_snr the total code energy
over the noise variance.  A flat (diagonal) prior gives a constant gain
(plain ridge shrinkage); a Matérn prior gives a lowpass gain.

The DFT convention is the unnormalized forward transform with 1/K on
the inverse, i.e. exactly ``np.fft.fft`` / ``np.fft.ifft``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .families import GAUSSIAN, FamilySpec, variance_function
from .kernels import CovarianceMatrix, covariance_spectrum, spectral_factorization
from .signals import Dictionary, SparseCode, Trial, adjoint_extract, has_overlap, reconstruct


def code_snr(codes: list[SparseCode], template_index: int, noise_variance: float) -> float:
    """Total squared code amplitude over the noise variance."""
    if not noise_variance > 0:
        raise ValueError("noise_variance must be positive")
    total = 0.0
    for code in codes:
        amps = code.amplitudes(template_index)
        total += float(np.dot(amps, amps))
    return total / noise_variance


def wiener_gains(psd: np.ndarray, snr: float) -> np.ndarray:
    """Per-frequency shrinkage psd / (psd + 1/snr)."""
    psd = np.asarray(psd, dtype=float)
    if np.any(psd <= 0):
        raise ValueError("psd values must be positive")
    if not snr > 0:
        raise ValueError("code snr must be positive")
    return psd / (psd + 1.0 / snr)


def unregularized_template(codes: list[SparseCode], trials: list[Trial],
                           template_index: int, family: FamilySpec, K: int,
                           other_templates: Dictionary | None = None) -> np.ndarray:
    """Amplitude-weighted average of residual segments, scaled by 1/snr.

    This is the template the update would produce with a flat infinite
    prior, i.e. the raw data-driven estimate before any smoothing.
    """
    if family.kind != GAUSSIAN:
        raise ValueError("the unregularized-template identity requires a Gaussian family")
    phi = family.dispersion
    accum = np.zeros(K)
    for code, trial in zip(codes, trials):
        z = trial.observations - trial.baseline_vector()
        if other_templates is not None:
            masked = _zero_template(other_templates, template_index)
            z = z - (reconstruct(masked, code, 0.0, trial.num_samples))
        accum += adjoint_extract(code.events(template_index), z / phi, K)
    snr = code_snr(codes, template_index, phi)
    if snr == 0.0:
        raise ValueError("no events for this template")
    return accum / snr


def wiener_predicted_template(codes: list[SparseCode], trials: list[Trial],
                              template_index: int, family: FamilySpec,
                              cov: CovarianceMatrix,
                              other_templates: Dictionary | None = None) -> np.ndarray:
    """Predicted (pre-normalization) template: gains applied in the DFT domain.

    Exact when the prior covariance is circulant and events do not
    overlap; approximate otherwise.  Overlapping events only raise a
    warning since the formula degrades gracefully.
    """
    if family.kind != GAUSSIAN:
        raise ValueError("Wiener prediction is defined for the Gaussian family")
    K = cov.size
    for code in codes:
        if has_overlap(code.events(template_index), K):
            warnings.warn("overlapping events: the Wiener prediction is approximate",
                          stacklevel=2)
            break
    h_tilde = unregularized_template(codes, trials, template_index, family, K, other_templates)
    snr = code_snr(codes, template_index, family.dispersion)
    lam = covariance_spectrum(cov)
    # a Toeplitz row wrap can dip marginally negative at high frequency;
    # those modes carry no prior power, so floor them near zero
    lam = np.maximum(lam, 1e-12 * np.trace(cov.entries) / K)
    gains = wiener_gains(lam, snr)
    return np.real(np.fft.ifft(gains * np.fft.fft(h_tilde)))


def general_case_gains(codes: list[SparseCode], mus: list[np.ndarray],
                       family: FamilySpec, psd: np.ndarray,
                       template_index: int) -> np.ndarray:
    """Per-frequency gains for non-Gaussian families (heuristic).

    The event-weighted information at template sample k is

        R_k = 1/phi * sum over events of amp^2 * var(mu at event sample + k)

    and the gain is psd_k / (psd_k + 1/R_k), indexing R by frequency bin
    as if it were diagonal in the DFT basis.  That identification is an
    approximation (exact only when R is constant), so treat the output
    as a diagnostic, not a guarantee.
    """
    psd = np.asarray(psd, dtype=float)
    K = psd.size
    phi = family.dispersion
    R = np.zeros(K)
    for code, mu in zip(codes, mus):
        events = code.events(template_index)
        if has_overlap(events, K):
            raise ValueError("overlapping events: the diagonal information formula is invalid")
        var = variance_function(family, np.asarray(mu, dtype=float))
        for ev in events:
            R += ev.amplitude ** 2 * var[ev.location : ev.location + K] / phi
    # psd * R / (psd * R + 1) is the gain written without dividing by R,
    # so zero-information samples map to zero gain
    return psd * R / (psd * R + 1.0)


@dataclass(frozen=True)
class SpectralReport:
    """Per-template spectral summary consumed by the plotting side."""

    omegas: np.ndarray
    psd: np.ndarray
    code_snr: float
    gains: np.ndarray
    unregularized_spectrum: np.ndarray
    filtered_spectrum: np.ndarray


def build_spectral_report(template: np.ndarray, codes: list[SparseCode],
                          template_index: int, family: FamilySpec,
                          cov: CovarianceMatrix) -> SpectralReport:
    """Summarize the trained template against its prior spectrum.

    The unregularized spectrum column reports the trained template's own
    DFT; the filtered column applies the gains to it.  Both are
    diagnostics for plots, not re-derivations of the update.
    """
    K = cov.size
    omegas = 2.0 * math.pi * np.arange(K) / K
    psd = spectral_factorization(cov)
    snr = code_snr(codes, template_index, family.dispersion)
    gains = wiener_gains(psd, snr) if snr > 0 else np.zeros(K)
    spectrum = np.fft.fft(np.asarray(template, dtype=float))
    return SpectralReport(
        omegas=omegas,
        psd=psd,
        code_snr=snr,
        gains=gains,
        unregularized_spectrum=spectrum,
        filtered_spectrum=gains * spectrum,
    )


def _zero_template(dictionary: Dictionary, c: int) -> Dictionary:
    t = np.array(dictionary.templates)
    t[c] = 0.0
    return Dictionary(t)
