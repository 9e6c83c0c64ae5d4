"""Selection-quality metrics aggregated over Monte Carlo replications.

Per replication: TP/FP/FN counts against the known useful set, with the
convention that an empty selection scores precision 0. Aggregation averages
the per-replication ratios; F1 is reported two ways — the harmonic mean of
the averaged precision and recall (the headline figure) and the mean of
per-replication F1 values. Type I error is the mean, over noise variables,
of each noise variable's across-replication selection frequency; power is
the per-useful-variable analogue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError


@dataclass(frozen=True)
class TruthSpec:
    """Partition of the variable names into useful and noise."""

    useful: frozenset
    noise: frozenset

    def __post_init__(self):
        object.__setattr__(self, "useful", frozenset(self.useful))
        object.__setattr__(self, "noise", frozenset(self.noise))
        if self.useful & self.noise:
            raise SchemaError("useful and noise sets must be disjoint")

    @classmethod
    def from_names(cls, useful, names) -> "TruthSpec":
        useful = frozenset(useful)
        names = frozenset(names)
        if not useful <= names:
            raise SchemaError("useful variables must be a subset of all names")
        return cls(useful=useful, noise=names - useful)

    @property
    def all_names(self) -> frozenset:
        return self.useful | self.noise


@dataclass(frozen=True)
class ReplicateScore:
    tp: int
    fp: int
    fn: int
    useful_selected: frozenset
    noise_selected: frozenset

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        total = self.tp + self.fn
        return self.tp / total if total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if (p + r) else 0.0


def score(selected, truth: TruthSpec) -> ReplicateScore:
    """TP/FP/FN of one selection against the truth partition."""
    selected = frozenset(selected)
    extra = selected - truth.all_names
    if extra:
        raise SchemaError(f"selection contains unknown variables {sorted(extra)}")
    useful_sel = selected & truth.useful
    noise_sel = selected & truth.noise
    return ReplicateScore(
        tp=len(useful_sel),
        fp=len(noise_sel),
        fn=len(truth.useful - selected),
        useful_selected=useful_sel,
        noise_selected=noise_sel,
    )


@dataclass(frozen=True)
class MetricsReport:
    precision: float  # mean per-replication precision
    recall: float  # mean per-replication recall
    f1: float  # harmonic mean of the two averages (headline)
    f1_mean: float  # mean of per-replication F1
    type1: float  # mean noise-variable selection frequency
    power: dict  # useful variable -> selection frequency
    counts: tuple  # (tp, fp, fn) per replication


def aggregate(scores, truth: TruthSpec) -> MetricsReport:
    """Average per-replication scores into one report."""
    scores = list(scores)
    if not scores:
        raise SchemaError("at least one replication required")
    prec = float(np.mean([s.precision for s in scores]))
    rec = float(np.mean([s.recall for s in scores]))
    f1 = 2.0 * prec * rec / (prec + rec) if (prec + rec) else 0.0
    f1_mean = float(np.mean([s.f1 for s in scores]))
    m = len(scores)
    noise_freq = {
        v: sum(1 for s in scores if v in s.noise_selected) / m for v in truth.noise
    }
    type1 = float(np.mean(list(noise_freq.values()))) if noise_freq else 0.0
    power = {
        v: sum(1 for s in scores if v in s.useful_selected) / m for v in truth.useful
    }
    return MetricsReport(
        precision=prec,
        recall=rec,
        f1=f1,
        f1_mean=f1_mean,
        type1=type1,
        power=power,
        counts=tuple((s.tp, s.fp, s.fn) for s in scores),
    )
