"""Convolutional sparse coding by greedy orthogonal matching pursuit.

Each greedy step scans every (template, location) candidate, scores it by
the exact likelihood improvement with its 1-D optimal amplitude, accepts
the best strictly-improving candidate, and then re-optimizes all active
amplitudes jointly (the orthogonal step).  Encoding stops once the trial
negative log-likelihood falls under the configured threshold, the
per-template event budget is exhausted, or no candidate improves.

Gaussian scoring is closed-form (squared residual correlation); other
families use a few vectorized Newton refinements of the amplitude at
every location simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .families import (
    GAUSSIAN,
    FamilySpec,
    cumulant,
    inverse_link,
    neg_log_likelihood,
    pointwise_deviance,
    saturated_neg_log_likelihood,
    variance_function,
)
from .signals import Dictionary, Event, SparseCode, Trial

_TINY = 1e-300
_IMPROVEMENT_EPS = 1e-12


@dataclass(frozen=True)
class CscConfig:
    """Sparse-coding controls.

    max_events caps the number of events per template within one encode
    (the sparsity budget); nll_threshold, when set, stops the greedy loop
    as soon as the encoded negative log-likelihood reaches it;
    min_separation keeps accepted events of the same template at least
    that many samples apart.
    """

    max_events: int = 20
    nll_threshold: float | None = None
    min_separation: int = 0

    def __post_init__(self):
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")
        if self.min_separation < 0:
            raise ValueError("min_separation must be nonnegative")


class _Encoder:
    """Greedy encode of one signal; `weight` scales the likelihood, which

    lets a trial-averaged signal stand in for a sum over trials with a
    shared code."""

    def __init__(self, dictionary: Dictionary, y: np.ndarray, baseline: np.ndarray,
                 family: FamilySpec, cfg: CscConfig, weight: float = 1.0):
        self.dict = dictionary
        self.y = y
        self.family = family
        self.cfg = cfg
        self.weight = weight
        self.K = dictionary.template_length
        self.C = dictionary.num_templates
        self.N = y.size
        self.eta = baseline.copy()
        self.baseline = baseline
        self.active: list[tuple[int, int]] = []  # (template, location) in acceptance order
        self.amps = np.zeros(0)
        self._y_win = sliding_window_view(y, self.K)
        # deviance offset: puts the stop threshold on a nonnegative,
        # trial-comparable scale (pure constant w.r.t. the code)
        self._saturated = saturated_neg_log_likelihood(family, y)
        self.nll_trace = [self._objective()]

    def _objective(self) -> float:
        return self.weight * (
            neg_log_likelihood(self.family, self.y, self.eta) - self._saturated)

    def _valid_mask(self, c: int) -> np.ndarray:
        mask = np.ones(self.N - self.K + 1, dtype=bool)
        sep = self.cfg.min_separation
        for (c2, loc) in self.active:
            if c2 != c:
                continue
            mask[loc] = False
            if sep > 0:
                mask[max(0, loc - sep + 1) : loc + sep] = False
        return mask

    def _score_gaussian(self, c: int, valid: np.ndarray):
        h = self.dict.template(c)
        r = self.y - self.eta
        corr = np.correlate(r, h, mode="valid")
        improvement = self.weight * corr * corr / (2.0 * self.family.dispersion)
        return np.where(valid, improvement, -math.inf), corr

    # exact refinement is restricted to the best candidates under the
    # cheap quadratic estimate; the estimate is second-order accurate, so
    # the true argmax is in the shortlist except for near-exact ties
    _SHORTLIST = 32

    def _score_newton(self, c: int, valid: np.ndarray, newton_iters: int = 3):
        h = self.dict.template(c)
        h2 = h * h
        phi = self.family.dispersion
        mu = inverse_link(self.family, self.eta)
        w = variance_function(self.family, mu)
        g0 = np.correlate(mu - self.y, h, mode="valid") / phi
        H0 = np.correlate(w, h2, mode="valid") / phi
        a = -g0 / np.maximum(H0, _TINY)
        estimate = np.where(valid, 0.5 * g0 * g0 / np.maximum(H0, _TINY), -math.inf)
        short = np.argsort(estimate)[-min(self._SHORTLIST, estimate.size):]
        short = short[np.isfinite(estimate[short])]
        improvement = np.full(estimate.shape, -math.inf)
        if short.size == 0:
            return improvement, a
        eta_win = sliding_window_view(self.eta, self.K)[short]
        y_win = self._y_win[short]
        a_s = a[short]
        for _ in range(newton_iters - 1):
            z = eta_win + a_s[:, None] * h
            mu_z = inverse_link(self.family, z)
            g = ((mu_z - y_win) @ h) / phi
            Hz = (variance_function(self.family, mu_z) @ h2) / phi
            a_s = a_s - g / np.maximum(Hz, _TINY)
        z = eta_win + a_s[:, None] * h
        delta_b = np.sum(cumulant(self.family, z) - cumulant(self.family, eta_win), axis=1)
        improvement[short] = self.weight * (a_s * (y_win @ h) - delta_b) / phi
        a[short] = a_s
        return improvement, a

    def _best_candidate(self):
        best = (-math.inf, None, None)  # improvement, (c, loc), amplitude
        for c in range(self.C):
            if sum(1 for (c2, _) in self.active if c2 == c) >= self.cfg.max_events:
                continue
            valid = self._valid_mask(c)
            if self.family.kind == GAUSSIAN:
                improvement, amps = self._score_gaussian(c, valid)
            else:
                improvement, amps = self._score_newton(c, valid)
            loc = int(np.argmax(improvement))
            if improvement[loc] > best[0]:
                best = (float(improvement[loc]), (c, loc), float(amps[loc]))
        return best

    def _columns(self) -> np.ndarray:
        A = np.zeros((self.N, len(self.active)))
        for m, (c, loc) in enumerate(self.active):
            A[loc : loc + self.K, m] = self.dict.template(c)
        return A

    def _refit_amplitudes(self) -> None:
        """Joint Newton re-optimization of all active amplitudes.

        Steps that fail to lower the objective are halved and ultimately
        skipped, so the refit never undoes the acceptance gain.
        """
        A = self._columns()
        phi = self.family.dispersion
        iters = 1 if self.family.kind == GAUSSIAN else 5
        amps = self.amps
        obj = self._objective()
        for _ in range(iters):
            mu = inverse_link(self.family, self.eta)
            g = A.T @ (mu - self.y) / phi
            w = variance_function(self.family, mu)
            H = (A * w[:, None]).T @ A / phi
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, g, rcond=None)[0]
            scale = 1.0
            for _ in range(10):
                trial_amps = amps - scale * step
                trial_eta = self.baseline + A @ trial_amps
                trial_obj = self.weight * (
                    neg_log_likelihood(self.family, self.y, trial_eta) - self._saturated)
                if trial_obj <= obj + _IMPROVEMENT_EPS:
                    amps, obj = trial_amps, trial_obj
                    self.eta = trial_eta
                    break
                scale *= 0.5
            else:
                break
        self.amps = amps

    def encode(self) -> SparseCode:
        while True:
            if (self.cfg.nll_threshold is not None
                    and self.nll_trace[-1] <= self.cfg.nll_threshold):
                break
            improvement, cand, amp = self._best_candidate()
            if cand is None or improvement <= _IMPROVEMENT_EPS:
                break
            c, loc = cand
            self.active.append((c, loc))
            self.amps = np.append(self.amps, amp)
            self.eta[loc : loc + self.K] += amp * self.dict.template(c)
            self._refit_amplitudes()
            self.nll_trace.append(self._objective())
        return self._to_code()

    def _to_code(self) -> SparseCode:
        per_template: list[list[Event]] = [[] for _ in range(self.C)]
        for (c, loc), amp in zip(self.active, self.amps):
            per_template[c].append(Event(loc, float(amp)))
        return SparseCode(per_template)


def comp_encode(dictionary: Dictionary, trial: Trial, family: FamilySpec,
                cfg: CscConfig) -> SparseCode:
    """Encode one trial; see the module docstring for the greedy scheme."""
    code, _ = comp_encode_with_trace(dictionary, trial, family, cfg)
    return code


def comp_encode_with_trace(dictionary: Dictionary, trial: Trial, family: FamilySpec,
                           cfg: CscConfig) -> tuple[SparseCode, np.ndarray]:
    """Like ``comp_encode`` but also returns the deviance-scale NLL after
    each accepted event (entry 0 is the empty code)."""
    enc = _Encoder(dictionary, trial.observations, trial.baseline_vector(), family, cfg)
    code = enc.encode()
    return code, np.asarray(enc.nll_trace)


def comp_encode_pooled(dictionary: Dictionary, trials: list[Trial], family: FamilySpec,
                       cfg: CscConfig) -> SparseCode:
    """Encode one code shared by all trials (stimulus-locked designs).

    Because the likelihood is linear in the observations, the sum of the
    per-trial objectives under a shared code equals the objective of the
    trial-averaged signal scaled by the trial count; the greedy engine
    runs once on that average.  cfg.nll_threshold is interpreted in
    pooled (summed over trials) units here.
    """
    if not trials:
        raise ValueError("pooled encode needs at least one trial")
    base = trials[0].baseline_vector()
    for t in trials[1:]:
        if t.num_samples != trials[0].num_samples or not np.array_equal(t.baseline_vector(), base):
            raise ValueError("pooled encode requires identical length and baseline across trials")
    y_bar = np.mean([t.observations for t in trials], axis=0)
    enc = _Encoder(dictionary, y_bar, base.copy(), family, cfg, weight=float(len(trials)))
    return enc.encode()


def nll_threshold_from_baseline(trials: list[Trial], family: FamilySpec,
                                baseline_window: tuple[int, int]) -> float:
    """Stopping threshold from an event-free stretch of the trials.

    Pools the per-sample NLL of the baseline-only model over the window
    across trials, then scales (mean + 2 standard errors of a window
    mean) up to the full trial length.
    """
    start, end = baseline_window
    if not trials:
        raise ValueError("no trials")
    N = trials[0].num_samples
    if not (0 <= start < end <= N):
        raise ValueError("baseline_window must be a nonempty range within the trial")
    W = end - start
    samples = []
    for t in trials:
        eta = t.baseline_vector()[start:end]
        samples.append(pointwise_deviance(family, t.observations[start:end], eta))
    pooled = np.concatenate(samples)
    return float(N * (pooled.mean() + 2.0 * pooled.std() / math.sqrt(W)))
