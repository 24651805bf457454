"""Command-line entry point.

One JSON config drives every subcommand; flags carry only paths and
overrides, so a run is reproducible from the config artifact alone.

Exit codes: 0 success, 2 invalid input or config, 3 numerical or
degenerate failure.  All randomness flows from the config seed; apart
from manifest timestamps, rerunning a command writes byte-identical
files.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bench import match_templates
from .config import (
    ConfigError,
    codes_from_lists,
    codes_to_lists,
    codes_to_rows,
    load_config,
    load_trials,
    parse_experiment,
    parse_family,
    parse_kernels,
    parse_sim,
    write_csv,
    write_json,
    write_trials_csv,
)
from .evidence import estimate_hyperparameters
from .families import BERNOULLI, FamilySpec
from .kernels import matern_cov
from .learning import (
    DegenerateDictionaryError,
    cross_validate,
    fit,
    initial_dictionary,
)
from .metrics import predictive_ll, r_squared
from .signals import Dictionary
from .simulate import gen_bernoulli_dataset, gen_gaussian_dataset, perturbed_init
from .spectral import build_spectral_report

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

# seed offset for the init perturbation, kept apart from the data stream
INIT_SEED_OFFSET = 1_000_003


def _manifest(out: Path, config_path, seed, outputs) -> None:
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest() if config_path else None
    write_json(out / "manifest.json", {
        "config_sha256": digest,
        "seed": seed,
        "created": datetime.now(timezone.utc).isoformat(),
        "outputs": sorted(str(p.name) for p in outputs),
        "version": __version__,
    })


def cmd_simulate(args) -> int:
    doc = load_config(args.config)
    sim = parse_sim(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = sim["spec"]
    if sim["kind"] == BERNOULLI:
        trials, truth, code, baseline = gen_bernoulli_dataset(
            spec, period=sim["period"], phase=sim["phase"],
            amplitude=sim["amplitude"], baseline_rate=sim["baseline_rate"])
        codes = [code] * spec.J
        family = {"family": "bernoulli", "dispersion": 1.0}
    else:
        trials, truth, codes = gen_gaussian_dataset(spec)
        baseline = 0.0
        family = {"family": "gaussian", "dispersion": spec.noise_variance}
    dataset = out / "dataset.csv"
    write_trials_csv(dataset, trials)
    truth_path = out / "truth.json"
    write_json(truth_path, {
        "templates": [list(map(float, truth.template(c))) for c in range(truth.num_templates)],
        "codes": codes_to_lists(codes),
        "baseline": baseline,
        "family": family,
        "n_samples": trials[0].num_samples,
    })
    _manifest(out, args.config, spec.seed, [dataset, truth_path])
    return EXIT_OK


def _load_truth_dictionary(path) -> Dictionary:
    import json

    with open(path) as handle:
        doc = json.load(handle)
    return Dictionary(np.asarray(doc["templates"], dtype=float))


def _resolve_cli_init(doc: dict, args):
    """Handle the perturbed-truth directive, which needs the truth file."""
    init_doc = doc.get("init", {"kind": "smoothed_random"})
    if init_doc.get("kind") != "perturbed_truth":
        return None
    if not getattr(args, "truth", None):
        raise ConfigError("init.kind 'perturbed_truth' requires --truth")
    truth = _load_truth_dictionary(args.truth)
    rng = np.random.default_rng(int(doc.get("seed", 0)) + INIT_SEED_OFFSET)
    return perturbed_init(truth, rng, min_err=float(init_doc.get("min_err", 0.7)))


def _write_fit_outputs(out: Path, result, cfg) -> list[Path]:
    outputs = []
    fit_path = out / "fit.json"
    write_json(fit_path, {
        "templates": [list(map(float, result.dictionary.template(c)))
                      for c in range(result.dictionary.num_templates)],
        "degenerate_flags": list(result.degenerate_flags),
        "objective_trace": [float(v) for v in result.objective_trace],
        "baseline": float(result.baseline),
        "nll_threshold": result.nll_threshold,
        "shared_code": result.shared_code,
        "codes": codes_to_lists(result.codes),
        "family": {"family": cfg.family.kind, "dispersion": cfg.family.dispersion},
        "kernels": [{"nu": k.nu, "variance": k.variance,
                     "lengthscale": k.lengthscale, "delta": k.delta}
                    for k in cfg.kernel_specs],
        "csc": {"max_events": cfg.csc.max_events,
                "nll_threshold": cfg.csc.nll_threshold,
                "min_separation": cfg.csc.min_separation},
    })
    outputs.append(fit_path)
    codes_path = out / "codes.csv"
    write_csv(codes_path, ("trial", "template", "location", "amplitude"),
              codes_to_rows(result.codes))
    outputs.append(codes_path)
    trace_path = out / "trace.csv"
    write_csv(trace_path, ("iteration", "objective"),
              list(enumerate(result.objective_trace)))
    outputs.append(trace_path)
    outputs.extend(_write_spectra(out, result, cfg))
    return outputs


def _write_spectra(out: Path, result, cfg) -> list[Path]:
    paths = []
    codes = result.codes
    if result.shared_code:
        # the shared code's energy counts once per trial
        codes = list(result.codes) * max(1, result.num_trials)
    for c, spec in enumerate(cfg.kernel_specs):
        cov = matern_cov(spec, result.dictionary.template_length)
        report = build_spectral_report(result.dictionary.template(c), codes, c,
                                       cfg.family, cov)
        path = out / f"spectrum_c{c}.csv"
        write_csv(path, ("omega", "psd", "gain", "unreg_spectrum_mag", "filtered_spectrum_mag"),
                  zip(report.omegas, report.psd, report.gains,
                      np.abs(report.unregularized_spectrum),
                      np.abs(report.filtered_spectrum)))
        paths.append(path)
    return paths


def cmd_fit(args) -> int:
    doc = load_config(args.config)
    init = _resolve_cli_init(doc, args)
    cfg = parse_experiment(doc, init=init)
    trials = load_trials(args.dataset)
    if cfg.template_length > trials[0].num_samples:
        raise ConfigError("template_length exceeds the trial length in the dataset")
    if cfg.family.kind == BERNOULLI:
        values = np.unique(np.concatenate([t.observations for t in trials]))
        if not np.all(np.isin(values, (0.0, 1.0))):
            raise ConfigError("dataset is not binary but the family is bernoulli")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    if getattr(args, "hyper_ml", False):
        cfg, hyper_outputs = _run_hyper_path(doc, cfg, trials, out)
        outputs.extend(hyper_outputs)

    result = fit(cfg, trials, n_jobs=args.workers)
    outputs.extend(_write_fit_outputs(out, result, cfg))

    if getattr(args, "truth", None):
        truth = _load_truth_dictionary(args.truth)
        errs = match_templates(result.dictionary, truth)
        metrics_path = out / "metrics.csv"
        write_csv(metrics_path,
                  ("seed", "J", "noise_variance", "lengthscale", "err_h1", "err_h2", "pll", "r2"),
                  [(cfg.seed, len(trials), cfg.family.dispersion,
                    cfg.kernel_specs[0].lengthscale,
                    errs[0], errs[1] if len(errs) > 1 else float("nan"),
                    predictive_ll(result, trials, cfg.family),
                    r_squared(result, trials, cfg.family))])
        outputs.append(metrics_path)

    _manifest(out, args.config, cfg.seed, outputs)
    return EXIT_OK


def _run_hyper_path(doc, cfg, trials, out: Path):
    """Evidence-ascent estimation of the kernel parameters before the fit."""
    hyper_doc = doc.get("hyper", {})
    rng = np.random.default_rng(cfg.seed)
    dictionary = initial_dictionary(cfg, rng)
    state, dictionary, _ = estimate_hyperparameters(
        cfg, trials, dictionary,
        max_steps=int(hyper_doc.get("max_steps", 50)),
        step_size=float(hyper_doc.get("step_size", 0.1)),
        tol=float(hyper_doc.get("tol", 1e-6)))
    trace_path = out / "hyper_trace.csv"
    _write_hyper_trace(trace_path, state, cfg)
    final_specs = state.kernel_specs(cfg.kernel_specs)
    from dataclasses import replace

    return replace(cfg, kernel_specs=final_specs), [trace_path]


def _write_hyper_trace(path, state, cfg) -> None:
    C = len(cfg.kernel_specs)
    header = ["iteration"]
    for c in range(C):
        header += [f"lengthscale_c{c}", f"variance_c{c}"]
    header.append("marginal_ll")
    # the trace records the evidence per step; parameters are reported at
    # their final values for intermediate rows equal to the stored theta
    rows = []
    for i, value in enumerate(state.marginal_ll_trace):
        row = [i]
        for c in range(C):
            row += [state.theta[c][0], state.theta[c][1]]
        row.append(value)
        rows.append(row)
    write_csv(path, header, rows)


def cmd_hyper(args) -> int:
    doc = load_config(args.config)
    cfg = parse_experiment(doc, init=_resolve_cli_init(doc, args))
    trials = load_trials(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_final, outputs = _run_hyper_path(doc, cfg, trials, out)
    result_path = out / "hyper_result.json"
    write_json(result_path, {
        "kernels": [{"nu": k.nu, "variance": k.variance,
                     "lengthscale": k.lengthscale, "delta": k.delta}
                    for k in cfg_final.kernel_specs],
    })
    outputs.append(result_path)
    _manifest(out, args.config, cfg.seed, outputs)
    return EXIT_OK


def cmd_crossval(args) -> int:
    doc = load_config(args.config)
    cv_doc = doc.get("crossval")
    if not cv_doc or not cv_doc.get("lengthscales"):
        raise ConfigError("crossval.lengthscales must list at least one value")
    folds = int(cv_doc.get("folds", 3))
    trials = load_trials(args.dataset)
    if folds > len(trials):
        raise ConfigError("crossval.folds exceeds the number of trials")
    base = parse_experiment(doc, init=_resolve_cli_init(doc, args))
    from dataclasses import replace

    grid = []
    for ls in cv_doc["lengthscales"]:
        specs = tuple(k.with_params(lengthscale=float(ls)) for k in base.kernel_specs)
        grid.append(replace(base, kernel_specs=specs))
    best, table = cross_validate(grid, trials, folds, n_jobs=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry in table:
        for f, (pll, r2) in enumerate(zip(entry["fold_plls"], entry["fold_r2s"])):
            rows.append((entry["lengthscale"], f, pll, r2))
    table_path = out / "cv_table.csv"
    write_csv(table_path, ("lengthscale", "fold", "pll", "r2"), rows)
    best_path = out / "best.json"
    write_json(best_path, {
        "lengthscale": best,
        "mean_pll": {str(e["lengthscale"]): e["mean_pll"] for e in table},
        "mean_r2": {str(e["lengthscale"]): e["mean_r2"] for e in table},
    })
    _manifest(out, args.config, base.seed, [table_path, best_path])
    return EXIT_OK


def cmd_spectrum(args) -> int:
    import json

    fit_path = Path(args.fit)
    if not fit_path.exists():
        raise ConfigError(f"fit result not found: {args.fit}")
    with open(fit_path) as handle:
        doc = json.load(handle)
    family = parse_family(doc)
    kernels = parse_kernels(doc)
    templates = np.asarray(doc["templates"], dtype=float)
    codes = codes_from_lists(doc["codes"], templates.shape[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for c, spec in enumerate(kernels):
        cov = matern_cov(spec, templates.shape[1])
        report = build_spectral_report(templates[c], codes, c, family, cov)
        path = out / f"spectrum_c{c}.csv"
        write_csv(path, ("omega", "psd", "gain", "unreg_spectrum_mag", "filtered_spectrum_mag"),
                  zip(report.omegas, report.psd, report.gains,
                      np.abs(report.unregularized_spectrum),
                      np.abs(report.filtered_spectrum)))
        outputs.append(path)
    _manifest(out, None, None, outputs)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpcdl",
        description="Convolutional dictionary learning with GP smoothness priors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="learn a dictionary from a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="truth.json for error metrics and perturbed init")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--hyper-ml", action="store_true", dest="hyper_ml",
                   help="estimate kernel parameters by marginal likelihood first")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("crossval", help="cross-validate the prior lengthscale")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("spectrum", help="spectral report CSVs from a fit result")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("hyper", help="marginal-likelihood kernel parameter estimation")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.set_defaults(func=cmd_hyper)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDictionaryError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
