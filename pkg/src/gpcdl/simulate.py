"""Synthetic data generators: Gaussian trials with bump/sigmoid templates
scattered at random, and a Bernoulli "synthetic neuron" driven by a
periodic stimulus.  Generators are pure functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import BERNOULLI, FamilySpec, inverse_link
from .metrics import dict_error
from .signals import Dictionary, Event, SparseCode, Trial, reconstruct

GAUSSIAN_BUMP = "gaussian_bump"
SIGMOID = "sigmoid"


def gaussian_bump(K: int) -> np.ndarray:
    """Unit-norm centered bell of width K/8."""
    k = np.arange(K, dtype=float)
    h = np.exp(-((k - K / 2.0) ** 2) / (2.0 * (K / 8.0) ** 2))
    return h / np.linalg.norm(h)


def sigmoid_template(K: int) -> np.ndarray:
    """Unit-norm monotone S-curve with transition width K/10."""
    k = np.arange(K, dtype=float)
    h = 1.0 / (1.0 + np.exp(-(k - K / 2.0) / (K / 10.0)))
    return h / np.linalg.norm(h)


def two_bump(K: int) -> np.ndarray:
    """Strong sharp early burst plus a weaker late one; the
    stimulus-response shape of a bursting spiking unit."""
    k = np.arange(K, dtype=float)
    width = K / 25.0
    h = np.exp(-((k - 0.25 * K) ** 2) / (2.0 * width ** 2))
    h += 0.5 * np.exp(-((k - 0.7 * K) ** 2) / (2.0 * width ** 2))
    return h / np.linalg.norm(h)


_NAMED_TEMPLATES = {GAUSSIAN_BUMP: gaussian_bump, SIGMOID: sigmoid_template,
                    "two_bump": two_bump}


def make_template(which, K: int) -> np.ndarray:
    if isinstance(which, str):
        try:
            return _NAMED_TEMPLATES[which](K)
        except KeyError:
            raise ValueError(f"unknown template generator: {which!r}") from None
    h = np.asarray(which, dtype=float)
    if h.shape != (K,):
        raise ValueError(f"custom template must have length {K}")
    return h / np.linalg.norm(h)


@dataclass(frozen=True)
class SimSpec:
    """Protocol knobs for the Gaussian simulation."""

    J: int
    templates: tuple = (GAUSSIAN_BUMP, SIGMOID)
    K: int = 50
    N: int = 1000
    events_per_template: int = 4
    amp_range: tuple[float, float] = (10.0, 20.0)
    noise_variance: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.amp_range[0] > self.amp_range[1]:
            raise ValueError("amp_range must satisfy low <= high")
        if self.K > self.N:
            raise ValueError("templates must fit inside the trial")
        if self.J < 1 or self.events_per_template < 1:
            raise ValueError("J and events_per_template must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


def _sample_separated_locations(rng: np.random.Generator, count: int,
                                max_loc: int, separation: int) -> np.ndarray:
    """Uniform locations in [0, max_loc] with pairwise gaps >= separation."""
    for _ in range(2000):
        locs = np.sort(rng.integers(0, max_loc + 1, size=count))
        if count == 1 or np.all(np.diff(locs) >= separation):
            return locs
    raise ValueError(
        f"cannot place {count} events with separation {separation} in [0, {max_loc}]")


def gen_gaussian_dataset(spec: SimSpec):
    """Sample (trials, true dictionary, true codes) under the spec.

    Each template fires ``events_per_template`` times per trial at
    uniform locations kept one template-length apart, with amplitudes
    uniform over ``amp_range``; white noise of the given variance is
    added on top.
    """
    rng = np.random.default_rng(spec.seed)
    truth = Dictionary(np.stack([make_template(t, spec.K) for t in spec.templates]))
    C = truth.num_templates
    trials, codes = [], []
    sigma = float(np.sqrt(spec.noise_variance))
    for _ in range(spec.J):
        per_template = []
        for _ in range(C):
            locs = _sample_separated_locations(
                rng, spec.events_per_template, spec.N - spec.K, spec.K)
            amps = rng.uniform(*spec.amp_range, size=spec.events_per_template)
            per_template.append([Event(int(l), float(a)) for l, a in zip(locs, amps)])
        code = SparseCode(per_template)
        clean = reconstruct(truth, code, 0.0, spec.N)
        noise = sigma * rng.standard_normal(spec.N) if sigma > 0 else 0.0
        trials.append(Trial(clean + noise, 0.0))
        codes.append(code)
    return trials, truth, codes


def gen_bernoulli_dataset(spec: SimSpec, template=None, period: int = 125,
                          phase: int | None = None, amplitude: float = 5.5,
                          baseline_rate: float = 0.05):
    """Stimulus-locked spiking trials: one event per period, shared by all
    trials, spikes drawn independently through the logistic link.

    Returns (trials, true dictionary, shared true code, baseline).  The
    stretch before ``phase`` is event-free and usable as a baseline
    window.
    """
    if period < 1:
        raise ValueError("period must be positive")
    rng = np.random.default_rng(spec.seed)
    K, N = spec.K, spec.N
    h = make_template(template if template is not None else GAUSSIAN_BUMP, K)
    truth = Dictionary(h[None, :])
    if phase is None:
        phase = period - K if period > K else 0
    locs = np.arange(phase, N - K + 1, period, dtype=int)
    if locs.size == 0:
        raise ValueError("no event fits: increase N or decrease phase")
    code = SparseCode([[Event(int(l), amplitude) for l in locs]])
    a = float(np.log(baseline_rate / (1.0 - baseline_rate)))
    eta = reconstruct(truth, code, a, N)
    rate = inverse_link(FamilySpec(BERNOULLI), eta)
    trials = [Trial((rng.uniform(size=N) < rate).astype(float), a) for _ in range(spec.J)]
    return trials, truth, code, a


def perturbed_init(truth: Dictionary, rng: np.random.Generator,
                   min_err: float = 0.7) -> Dictionary:
    """Noise-corrupt each true template until its dictionary error exceeds
    ``min_err``; the noise scale is bisected per template."""
    rows = []
    for c in range(truth.num_templates):
        h = truth.template(c)
        g = rng.standard_normal(h.size)

        def err_at(scale: float) -> float:
            v = h + scale * g
            return dict_error(v, h)

        lo, hi = 0.0, 1.0
        while err_at(hi) <= min_err:
            hi *= 2.0
            if hi > 1e6:
                raise RuntimeError("noise direction cannot reach the target error")
        # bisect to land just past the threshold
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if err_at(mid) > min_err:
                hi = mid
            else:
                lo = mid
        v = h + hi * g
        rows.append(v / np.linalg.norm(v))
    return Dictionary(np.stack(rows))
