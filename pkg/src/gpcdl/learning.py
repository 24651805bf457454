"""Alternating minimization: sparse-code all trials, update the dictionary,
repeat for a fixed number of rounds; plus cross-validation over the prior
lengthscale.

Every source of randomness flows from the experiment seed, so a fit is a
pure function of (config, trials).  The recorded objective (data NLL plus
template priors) is kept non-increasing by two guards: per trial, a fresh
encode that scores worse than the previous round's code under the current
dictionary is discarded, and a template update whose unit-norm projection
scores worse than the incoming template is skipped.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .coding import CscConfig, comp_encode, comp_encode_pooled, nll_threshold_from_baseline
from .families import BERNOULLI, FamilySpec, link, neg_log_likelihood
from .kernels import KernelSpec, matern_cov
from .signals import Dictionary, SparseCode, Trial, reconstruct
from .update import CduConfig, cyclic_update, map_objective

SMOOTHED_RANDOM = "smoothed_random"


class DegenerateDictionaryError(RuntimeError):
    """Raised when every template loses event support during a fit."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a fit needs besides the trials themselves.

    ``init`` is either an explicit Dictionary or the name of a generator
    directive; ``baseline`` is a number, or "estimate" to fit a constant
    from all trials before training.  When ``auto_threshold`` is set the
    sparse-coding stop threshold is computed from ``baseline_window``.
    """

    family: FamilySpec
    kernel_specs: tuple[KernelSpec, ...]
    csc: CscConfig = CscConfig()
    cdu: CduConfig = CduConfig()
    template_length: int = 50
    outer_iters: int = 15
    seed: int = 0
    init: Dictionary | str = SMOOTHED_RANDOM
    shared_code: bool = False
    baseline: float | str = 0.0
    auto_threshold: bool = False
    baseline_window: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kernel_specs", tuple(self.kernel_specs))
        if self.outer_iters < 0:
            raise ValueError("outer_iters must be nonnegative")
        if self.auto_threshold and self.baseline_window is None:
            raise ValueError("auto_threshold requires a baseline_window")
        if self.baseline == "estimate_window" and self.baseline_window is None:
            raise ValueError("baseline 'estimate_window' requires a baseline_window")

    @property
    def num_templates(self) -> int:
        return len(self.kernel_specs)


@dataclass(frozen=True)
class FitResult:
    dictionary: Dictionary
    codes: list[SparseCode]
    objective_trace: np.ndarray
    degenerate_flags: list[bool]
    config: ExperimentConfig
    baseline: float | np.ndarray
    nll_threshold: float | None
    shared_code: bool = False
    num_trials: int = 0


def smoothed_random_dictionary(C: int, K: int, rng: np.random.Generator) -> Dictionary:
    """Unit-norm box-smoothed Gaussian noise; the neutral untrained start."""
    width = max(1, K // 10)
    box = np.ones(width) / width
    rows = [np.convolve(rng.standard_normal(K), box, mode="same") for _ in range(C)]
    return Dictionary.from_rows(rows)


def _resolve_baseline(cfg: ExperimentConfig, trials: list[Trial]) -> float:
    if cfg.baseline == "estimate":
        pooled_mean = float(np.mean([t.observations.mean() for t in trials]))
    elif cfg.baseline == "estimate_window":
        if cfg.baseline_window is None:
            raise ValueError("baseline 'estimate_window' requires a baseline_window")
        lo, hi = cfg.baseline_window
        pooled_mean = float(np.mean([t.observations[lo:hi].mean() for t in trials]))
    else:
        return float(cfg.baseline)
    if cfg.family.kind == BERNOULLI:
        pooled_mean = min(max(pooled_mean, 1e-6), 1.0 - 1e-6)
        return float(link(cfg.family, np.array([pooled_mean]))[0])
    return pooled_mean


def initial_dictionary(cfg: ExperimentConfig, rng: np.random.Generator) -> Dictionary:
    """Resolve the configured init: an explicit dictionary or a directive."""
    if isinstance(cfg.init, Dictionary):
        if cfg.init.num_templates != cfg.num_templates:
            raise ValueError("init dictionary has the wrong number of templates")
        return Dictionary(np.array(cfg.init.templates))
    if cfg.init == SMOOTHED_RANDOM:
        return smoothed_random_dictionary(cfg.num_templates, cfg.template_length, rng)
    raise ValueError(f"unknown init directive: {cfg.init!r}")


def fit(cfg: ExperimentConfig, trials: list[Trial], n_jobs: int = 1) -> FitResult:
    """Run ``outer_iters`` rounds of encode-then-update and record the
    objective after each round."""
    if not trials:
        raise ValueError("no trials")
    N = trials[0].num_samples
    if any(t.num_samples != N for t in trials):
        raise ValueError("all trials must have the same length")

    rng = np.random.default_rng(cfg.seed)
    dictionary = initial_dictionary(cfg, rng)
    K = dictionary.template_length

    a = _resolve_baseline(cfg, trials)
    work_trials = [Trial(t.observations, a) for t in trials]

    csc_cfg = cfg.csc
    threshold = csc_cfg.nll_threshold
    if cfg.auto_threshold:
        threshold = nll_threshold_from_baseline(work_trials, cfg.family, cfg.baseline_window)
        csc_cfg = replace(csc_cfg, nll_threshold=threshold)

    if cfg.shared_code:
        # one code for all trials: the engine encodes the trial average
        # with the likelihood scaled by J, which is exactly the summed
        # objective, so the threshold scales by J as well
        J = len(work_trials)
        y_bar = np.mean([t.observations for t in work_trials], axis=0)
        eff_trials = [Trial(y_bar, a)]
        weights = [float(J)]
        if csc_cfg.nll_threshold is not None:
            csc_cfg = replace(csc_cfg, nll_threshold=J * csc_cfg.nll_threshold)
    else:
        eff_trials = work_trials
        weights = None

    covs = [matern_cov(ks, K) for ks in cfg.kernel_specs]
    codes = [SparseCode.empty(cfg.num_templates) for _ in eff_trials]
    trace = []
    flags = [False] * cfg.num_templates

    def encode_one(args):
        trial, old_code = args
        if cfg.shared_code:
            new_code = comp_encode_pooled(dictionary, work_trials, cfg.family, csc_cfg)
        else:
            new_code = comp_encode(dictionary, trial, cfg.family, csc_cfg)
        # keep the better of old and new under the current dictionary, so
        # the recorded objective cannot move up between rounds
        w = weights[0] if weights else 1.0
        old_nll = w * neg_log_likelihood(
            cfg.family, trial.observations,
            reconstruct(dictionary, old_code, trial.baseline, trial.num_samples))
        new_nll = w * neg_log_likelihood(
            cfg.family, trial.observations,
            reconstruct(dictionary, new_code, trial.baseline, trial.num_samples))
        return new_code if new_nll <= old_nll else old_code

    for _ in range(cfg.outer_iters):
        jobs = list(zip(eff_trials, codes))
        if n_jobs > 1 and not cfg.shared_code:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                codes = list(pool.map(encode_one, jobs))
        else:
            codes = [encode_one(j) for j in jobs]
        dictionary, results = cyclic_update(
            dictionary, codes, eff_trials, cfg.family, covs, cfg.cdu,
            trial_weights=weights)
        flags = [r.degenerate for r in results]
        if all(flags):
            raise DegenerateDictionaryError(
                "every template lost event support; check the threshold and data scale")
        trace.append(map_objective(dictionary, codes, eff_trials, cfg.family, covs,
                                   trial_weights=weights))

    return FitResult(
        dictionary=dictionary,
        codes=codes,
        objective_trace=np.asarray(trace),
        degenerate_flags=flags,
        config=replace(cfg, csc=csc_cfg),
        baseline=a,
        nll_threshold=threshold,
        shared_code=cfg.shared_code,
        num_trials=len(trials),
    )


def cross_validate(cfg_grid: list[ExperimentConfig], trials: list[Trial],
                   folds: int, n_jobs: int = 1):
    """Contiguous-block K-fold selection of the prior lengthscale.

    Each config trains on folds-1 blocks and is scored by predictive
    log-likelihood on the held-out block; returns the lengthscale with
    the best mean score plus the full metrics table.
    """
    from .metrics import predictive_ll, r_squared

    if not cfg_grid:
        raise ValueError("empty config grid")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(trials) < folds:
        raise ValueError("need at least one trial per fold")

    bounds = np.linspace(0, len(trials), folds + 1).astype(int)
    blocks = [list(range(bounds[i], bounds[i + 1])) for i in range(folds)]

    table = []
    for cfg in cfg_grid:
        fold_plls, fold_r2s = [], []
        for held in blocks:
            train = [trials[i] for i in range(len(trials)) if i not in held]
            test = [trials[i] for i in held]
            result = fit(cfg, train, n_jobs=n_jobs)
            fold_plls.append(predictive_ll(result, test, cfg.family))
            fold_r2s.append(r_squared(result, test, cfg.family))
        table.append({
            "lengthscale": cfg.kernel_specs[0].lengthscale,
            "fold_plls": fold_plls,
            "fold_r2s": fold_r2s,
            "mean_pll": float(np.mean(fold_plls)),
            "mean_r2": float(np.mean(fold_r2s)),
        })
    best = max(range(len(table)), key=lambda i: table[i]["mean_pll"])
    return table[best]["lengthscale"], table
