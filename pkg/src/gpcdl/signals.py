"""Core data model: templates, sparse event codes, trials, and the
shift-and-scale operators that connect them.

A code is stored as (location, amplitude) event pairs per template, never
as a dense activation vector: codes are a handful of events in signals of
a few thousand samples, and every operator below runs in
O(events x template length).

Locations are 0-based and reference the first sample covered by the
shifted template, so a valid location n satisfies 0 <= n <= N - K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Event:
    """One template occurrence: where it starts and how strongly it fires."""

    location: int
    amplitude: float


@dataclass(frozen=True)
class Dictionary:
    """C unit-norm templates of length K, stacked as a (C, K) array."""

    templates: np.ndarray

    def __post_init__(self):
        t = np.atleast_2d(np.asarray(self.templates, dtype=float))
        t.setflags(write=False)
        object.__setattr__(self, "templates", t)

    @property
    def num_templates(self) -> int:
        return self.templates.shape[0]

    @property
    def template_length(self) -> int:
        return self.templates.shape[1]

    def template(self, c: int) -> np.ndarray:
        return self.templates[c]

    def max_norm_deviation(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.templates, axis=1) - 1.0)))

    @staticmethod
    def from_rows(rows) -> "Dictionary":
        normed = [np.asarray(r, float) / np.linalg.norm(r) for r in rows]
        return Dictionary(np.stack(normed))


class SparseCode:
    """Per-template event lists for one trial (or one shared pooled trial).

    Events within a template are kept sorted by location; this is the
    canonical order and makes encodes comparable across runs.
    """

    def __init__(self, events_per_template):
        self._events = []
        for evs in events_per_template:
            evs = sorted(evs, key=lambda e: e.location)
            locs = [e.location for e in evs]
            if any(b <= a for a, b in zip(locs, locs[1:])):
                raise ValueError("event locations within a template must be distinct")
            self._events.append(tuple(evs))
        self._events = tuple(self._events)

    @property
    def num_templates(self) -> int:
        return len(self._events)

    def events(self, c: int) -> tuple[Event, ...]:
        return self._events[c]

    def num_events(self) -> int:
        return sum(len(e) for e in self._events)

    def amplitudes(self, c: int) -> np.ndarray:
        return np.array([e.amplitude for e in self._events[c]], dtype=float)

    def locations(self, c: int) -> np.ndarray:
        return np.array([e.location for e in self._events[c]], dtype=int)

    def __eq__(self, other):
        return isinstance(other, SparseCode) and self._events == other._events

    def __repr__(self):
        counts = [len(e) for e in self._events]
        return f"SparseCode(events per template={counts})"

    @staticmethod
    def empty(num_templates: int) -> "SparseCode":
        return SparseCode([[] for _ in range(num_templates)])


@dataclass(frozen=True)
class Trial:
    """One observed signal with its (scalar or per-sample) baseline."""

    observations: np.ndarray
    baseline: float | np.ndarray = 0.0

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float)
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)
        if np.ndim(self.baseline) > 0:
            b = np.asarray(self.baseline, dtype=float)
            if b.shape != y.shape:
                raise ValueError("per-sample baseline must match the trial length")
            b.setflags(write=False)
            object.__setattr__(self, "baseline", b)
        else:
            object.__setattr__(self, "baseline", float(self.baseline))

    @property
    def num_samples(self) -> int:
        return self.observations.size

    def baseline_vector(self) -> np.ndarray:
        if np.ndim(self.baseline) > 0:
            return self.baseline
        return np.full(self.num_samples, self.baseline)


def _check_location(loc: int, N: int, K: int) -> None:
    if loc < 0 or loc > N - K:
        raise ValueError(f"event location {loc} out of bounds for N={N}, K={K}")


def reconstruct(dictionary: Dictionary, code: SparseCode, baseline, N: int) -> np.ndarray:
    """Natural parameter eta: sum of shifted scaled templates plus baseline."""
    K = dictionary.template_length
    eta = np.zeros(N)
    for c in range(dictionary.num_templates):
        h = dictionary.template(c)
        for ev in code.events(c):
            _check_location(ev.location, N, K)
            eta[ev.location : ev.location + K] += ev.amplitude * h
    if np.ndim(baseline) > 0:
        eta += np.asarray(baseline, dtype=float)
    else:
        eta += float(baseline)
    return eta


def adjoint_extract(code_c, v: np.ndarray, K: int) -> np.ndarray:
    """Amplitude-weighted sum of the length-K segments of v at event locations.

    This is the transpose of the code's shift-and-scale operator applied
    to v, i.e. the segment extraction used by the dictionary update.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(K)
    for ev in code_c:
        _check_location(ev.location, v.size, K)
        out += ev.amplitude * v[ev.location : ev.location + K]
    return out


def weighted_gram(code_c, w: np.ndarray, K: int) -> np.ndarray:
    """K x K Gram of the code operator under diagonal weights w.

    Overlapping event pairs contribute off-diagonal bands; for
    non-overlapping events with unit weights this collapses to
    (sum of squared amplitudes) * I.
    """
    return weighted_cross_gram(code_c, code_c, w, K)


def weighted_cross_gram(code_a, code_b, w: np.ndarray, K: int) -> np.ndarray:
    """Cross-template Gram block: pairs one event list against another.

    Entry (k, k') accumulates x_a x_b w[n_a + k] whenever the two shifted
    samples coincide, i.e. on the diagonal offset n_b - n_a.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    N = w.size
    G = np.zeros((K, K))
    for ea in code_a:
        _check_location(ea.location, N, K)
        for eb in code_b:
            _check_location(eb.location, N, K)
            d = eb.location - ea.location
            if abs(d) >= K:
                continue
            # overlapping sample range in template-a coordinates
            k_lo = max(0, d)
            k_hi = min(K, K + d)
            k = np.arange(k_lo, k_hi)
            G[k, k - d] += ea.amplitude * eb.amplitude * w[ea.location + k]
    return G


def has_overlap(code_c, K: int) -> bool:
    """True if any two events of this template overlap within the trial."""
    locs = sorted(e.location for e in code_c)
    return any(b - a < K for a, b in zip(locs, locs[1:]))
