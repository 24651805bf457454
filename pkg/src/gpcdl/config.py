"""JSON config parsing and the file formats shared with the CLI.

One JSON document drives every command; validation errors always name
the offending field.  All numeric text output (CSV cells, JSON floats)
uses shortest round-trip formatting so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .coding import CscConfig
from .families import BERNOULLI, GAUSSIAN, FamilySpec
from .kernels import KernelSpec
from .learning import ExperimentConfig
from .signals import Dictionary, Event, SparseCode, Trial
from .simulate import SimSpec
from .update import CduConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _require(doc: dict, field: str, default=None, required: bool = False):
    if field in doc:
        return doc[field]
    if required:
        raise ConfigError(f"missing required field {field!r}")
    return default


def load_config(path) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None


def parse_family(doc: dict) -> FamilySpec:
    obj = _require(doc, "family", required=True)
    kind = _require(obj, "family", required=True)
    if kind not in (GAUSSIAN, BERNOULLI):
        raise ConfigError(f"family must be 'gaussian' or 'bernoulli', got {kind!r}")
    dispersion = obj.get("dispersion", 1.0)
    try:
        return FamilySpec(kind, float(dispersion))
    except ValueError as exc:
        raise ConfigError(f"family.dispersion: {exc}") from None


def parse_kernels(doc: dict) -> tuple[KernelSpec, ...]:
    kernels = _require(doc, "kernels", required=True)
    if not kernels:
        raise ConfigError("kernels must list at least one kernel")
    specs = []
    for i, k in enumerate(kernels):
        try:
            specs.append(KernelSpec(
                nu=float(k.get("nu", 1.5)),
                variance=float(k.get("variance", 1.0)),
                lengthscale=float(_require(k, "lengthscale", required=True)),
                delta=float(k.get("delta", 1.0)),
            ))
        except (ConfigError, TypeError):
            raise
        except ValueError as exc:
            raise ConfigError(f"kernels[{i}]: {exc}") from None
    return tuple(specs)


def parse_csc(doc: dict) -> tuple[CscConfig, bool, tuple[int, int] | None]:
    """Returns (csc config, auto_threshold, baseline_window)."""
    obj = doc.get("csc", {})
    threshold = obj.get("nll_threshold")
    auto = threshold == "auto"
    window = obj.get("baseline_window")
    if window is not None:
        if len(window) != 2:
            raise ConfigError("csc.baseline_window must be [start, end]")
        window = (int(window[0]), int(window[1]))
    if auto and window is None:
        raise ConfigError("csc.nll_threshold 'auto' requires csc.baseline_window")
    try:
        cfg = CscConfig(
            max_events=int(obj.get("max_events", 20)),
            nll_threshold=None if (auto or threshold is None) else float(threshold),
            min_separation=int(obj.get("min_separation", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"csc: {exc}") from None
    return cfg, auto, window


def parse_cdu(doc: dict) -> CduConfig:
    obj = doc.get("cdu", {})
    try:
        return CduConfig(
            newton_iters=int(obj.get("newton_iters", 3)),
            step_damping=float(obj.get("step_damping", 1.0)),
            backtrack=bool(obj.get("backtrack", True)),
        )
    except ValueError as exc:
        raise ConfigError(f"cdu: {exc}") from None


def parse_experiment(doc: dict, init=None) -> ExperimentConfig:
    """Assemble the fit configuration; ``init`` overrides the directive."""
    family = parse_family(doc)
    kernels = parse_kernels(doc)
    csc, auto, window = parse_csc(doc)
    baseline = doc.get("baseline", 0.0)
    if baseline != "estimate":
        try:
            baseline = float(baseline)
        except (TypeError, ValueError):
            raise ConfigError("baseline must be a number or 'estimate'") from None
    init_doc = doc.get("init", {"kind": "smoothed_random"})
    if init is None:
        kind = init_doc.get("kind", "smoothed_random")
        if kind == "smoothed_random":
            init = "smoothed_random"
        elif kind == "explicit":
            rows = _require(init_doc, "templates", required=True)
            init = Dictionary.from_rows(rows)
        elif kind == "perturbed_truth":
            raise ConfigError("init.kind 'perturbed_truth' requires --truth on the command line")
        else:
            raise ConfigError(f"init.kind {kind!r} is not recognized")
    try:
        return ExperimentConfig(
            family=family,
            kernel_specs=kernels,
            csc=csc,
            cdu=parse_cdu(doc),
            template_length=int(doc.get("template_length", 50)),
            outer_iters=int(doc.get("outer_iters", 15)),
            seed=int(doc.get("seed", 0)),
            init=init,
            shared_code=bool(doc.get("shared_code", False)),
            baseline=baseline,
            auto_threshold=auto,
            baseline_window=window,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_sim(doc: dict) -> dict:
    """Validated simulation section, kept as a plain dict plus the SimSpec."""
    obj = _require(doc, "sim", required=True)
    kind = obj.get("kind", "gaussian")
    if kind not in (GAUSSIAN, BERNOULLI):
        raise ConfigError(f"sim.kind must be 'gaussian' or 'bernoulli', got {kind!r}")
    amp_range = obj.get("amp_range", [10.0, 20.0])
    if len(amp_range) != 2 or amp_range[0] > amp_range[1]:
        raise ConfigError("sim.amp_range must be [low, high] with low <= high")
    try:
        spec = SimSpec(
            J=int(_require(obj, "J", required=True)),
            templates=tuple(obj.get("templates", ["gaussian_bump", "sigmoid"])),
            K=int(obj.get("K", 50)),
            N=int(obj.get("N", 1000)),
            events_per_template=int(obj.get("events_per_template", 4)),
            amp_range=(float(amp_range[0]), float(amp_range[1])),
            noise_variance=float(obj.get("noise_variance", 5.0)),
            seed=int(doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None
    out = {"kind": kind, "spec": spec}
    if kind == BERNOULLI:
        out.update(
            period=int(obj.get("period", 125)),
            phase=obj.get("phase"),
            amplitude=float(obj.get("amplitude", 5.5)),
            baseline_rate=float(obj.get("baseline_rate", 0.05)),
        )
        if out["phase"] is not None:
            out["phase"] = int(out["phase"])
    return out


# ---------------------------------------------------------------- files

def fmt(x) -> str:
    """Shortest round-trip text for a float; plain str otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_trials_csv(path, trials: list[Trial]) -> None:
    """One row per trial, N plain numeric columns, no header."""
    with open(path, "w", newline="") as handle:
        for t in trials:
            handle.write(",".join(repr(float(v)) for v in t.observations))
            handle.write("\n")


def load_trials(path, baseline=0.0) -> list[Trial]:
    """Read trials from the CSV matrix or the JSON dataset envelope."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"dataset file not found: {path}")
    if p.suffix == ".json":
        with open(p) as handle:
            doc = json.load(handle)
        baseline = doc.get("baseline", baseline)
        return [Trial(np.asarray(row, dtype=float), baseline) for row in doc["trials"]]
    data = np.loadtxt(p, delimiter=",", ndmin=2)
    return [Trial(row, baseline) for row in data]


def codes_to_rows(codes: list[SparseCode]):
    """Flatten codes to (trial, template, location, amplitude) rows."""
    rows = []
    for j, code in enumerate(codes):
        for c in range(code.num_templates):
            for ev in code.events(c):
                rows.append((j, c, ev.location, ev.amplitude))
    return rows


def codes_from_lists(raw, num_templates: int) -> list[SparseCode]:
    """Rebuild codes from the JSON form [[{template, location, amplitude}]]."""
    out = []
    for entry in raw:
        per = [[] for _ in range(num_templates)]
        for ev in entry:
            per[int(ev["template"])].append(Event(int(ev["location"]), float(ev["amplitude"])))
        out.append(SparseCode(per))
    return out


def codes_to_lists(codes: list[SparseCode]):
    out = []
    for code in codes:
        entry = []
        for c in range(code.num_templates):
            for ev in code.events(c):
                entry.append({"template": c, "location": ev.location, "amplitude": ev.amplitude})
        out.append(entry)
    return out
