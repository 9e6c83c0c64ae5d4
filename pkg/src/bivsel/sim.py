"""Synthetic benchmark: data-generating process, missingness scenarios, and
the Monte Carlo scenario runner.

The generator produces 10 useful predictors (two Bernoulli, three standard
normal, one gamma, four conditional normals with nonlinear and interaction
structure) plus configurable counts of continuous and binary noise columns,
and a binary outcome whose logit mixes linear, exponential, polynomial, and
sinusoidal interaction terms.

Missingness scenarios mask the outcome and four predictors across eight
patterns (right-tailed for patterns 1-5, both-tailed for 6-8) at three
intensity levels. The runner replicates generate -> ampute ->
bootstrap-imputed selection -> metrics, optionally adding complete-case
comparison rows, and emits flat tables ready for CSV output.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .ampute import AmputationPlan, Pattern, Tail, ampute
from .data import ColumnKind, DataMatrix, DerivedColumn, RngHandle, TransformSpec
from .errors import PipelineError, SchemaError
from .metrics import TruthSpec, aggregate, score
from .select import (
    DEFAULT_PI,
    METHOD_NAMES,
    SelectionRun,
    default_method_spec,
    select_one,
    select_with_missing,
)

log = logging.getLogger(__name__)

N_USEFUL = 10


@dataclass(frozen=True)
class DgpSpec:
    n: int
    n_noise_cont: int = 20
    n_noise_bin: int = 20
    gamma_param: str = "shape-rate"  # reading of the two-parameter gamma
    seed: int = 0

    def __post_init__(self):
        if self.n < 50:
            raise SchemaError("sample size must be >= 50")
        if self.n_noise_cont < 0 or self.n_noise_bin < 0:
            raise SchemaError("noise counts must be nonnegative")
        if self.gamma_param not in ("shape-rate", "shape-scale"):
            raise SchemaError("gamma_param must be 'shape-rate' or 'shape-scale'")


def variable_names(dgp: DgpSpec):
    k = N_USEFUL + dgp.n_noise_cont + dgp.n_noise_bin
    return tuple(f"x{i}" for i in range(1, k + 1))


def generate(dgp: DgpSpec, rng=None):
    """Draw one dataset; returns (DataMatrix, TruthSpec)."""
    handle = rng if isinstance(rng, RngHandle) else RngHandle(dgp.seed)
    gen = handle.generator()
    n = dgp.n
    x1 = (gen.random(n) < 0.5).astype(float)
    x2 = (gen.random(n) < 0.5).astype(float)
    x3 = gen.normal(size=n)
    x4 = gen.normal(size=n)
    x5 = gen.normal(size=n)
    scale = 1.0 / 6.0 if dgp.gamma_param == "shape-rate" else 6.0
    x6 = gen.gamma(4.0, scale, size=n)
    x7 = -0.4 * x5 + 0.4 * x6 + 0.3 * x5 * x6 + gen.normal(size=n)
    x8 = 0.1 * x5 * (x6 - 2.0) ** 2 - 0.1 * x7**2 + gen.normal(size=n)
    x9 = 0.5 * x3 + 0.3 * x4 - 0.3 * x5**2 + 0.2 * x3 * x4 + gen.normal(size=n)
    x10 = (
        0.1 * x3**3 - 0.3 * x4 - 0.4 * x5 + 0.2 * x9**2 + 0.3 * x4 * x5
        + gen.normal(size=n)
    )
    cols = [x1, x2, x3, x4, x5, x6, x7, x8, x9, x10]
    kinds = [ColumnKind.BINARY, ColumnKind.BINARY] + [ColumnKind.CONTINUOUS] * 8
    for _ in range(dgp.n_noise_cont):
        cols.append(gen.normal(size=n))
        kinds.append(ColumnKind.CONTINUOUS)
    for _ in range(dgp.n_noise_bin):
        cols.append((gen.random(n) < 0.5).astype(float))
        kinds.append(ColumnKind.BINARY)
    logit = (
        -2.7
        + 1.8 * x1
        + 0.5 * x2
        + 1.1 * x3
        - 0.4 * np.exp(x5)
        - 0.4 * (x6 - 3.5) ** 2
        + 0.3 * (x7 - 1.0) ** 3
        + 1.1 * x8
        - 1.1 * x10
        + 5.0 * np.sin(0.1 * np.pi * x4 * x9)
        - 0.4 * x5 * x10**2
        + 0.4 * x3**2 * x8
    )
    y = (gen.random(n) < expit(logit)).astype(float)
    X = np.column_stack(cols)
    names = variable_names(dgp)
    d = DataMatrix(
        names=names,
        kinds=tuple(kinds),
        x=X,
        y=y,
        x_mask=np.zeros_like(X, dtype=bool),
        y_mask=np.zeros(n, dtype=bool),
        outcome="y",
    )
    truth = TruthSpec.from_names([f"x{i}" for i in range(1, N_USEFUL + 1)], names)
    return d, truth


# ---------------------------------------------------------------------------
# missingness scenarios
# ---------------------------------------------------------------------------


class Missingness(enum.Enum):
    COMPLETE = "complete"
    PCT15 = "pct15"
    PCT30 = "pct30"
    PCT60 = "pct60"


def scenario_transforms() -> TransformSpec:
    """Derived columns feeding the weighted sum scores."""
    return TransformSpec(
        derived=(
            DerivedColumn("x5_sq", "square", ("x5",)),
            DerivedColumn("x6_sq", "square", ("x6",)),
            DerivedColumn("x7_sq", "square", ("x7",)),
            DerivedColumn("x3x4", "product", ("x3", "x4")),
            DerivedColumn("x3x8", "product", ("x3", "x8")),
            DerivedColumn("x4x5", "product", ("x4", "x5")),
            DerivedColumn("x4x9", "product", ("x4", "x9")),
            DerivedColumn("x5x6", "product", ("x5", "x6")),
            DerivedColumn("x5x10", "product", ("x5", "x10")),
        )
    )


_PROPORTIONS = {
    Missingness.PCT15: (0.30, 0.09, 0.09, 0.08, 0.08, 0.16, 0.10, 0.10),
    Missingness.PCT30: (0.20, 0.15, 0.15, 0.10, 0.10, 0.10, 0.10, 0.10),
    Missingness.PCT60: (0.30, 0.09, 0.09, 0.08, 0.08, 0.16, 0.10, 0.10),
}

_WITHIN_FRAC = {
    Missingness.PCT15: 0.15,
    Missingness.PCT30: 0.30,
    Missingness.PCT60: 0.60,
}


def build_scenario_plan(miss: Missingness) -> AmputationPlan:
    """The eight-pattern amputation plan at the requested intensity."""
    if miss is Missingness.COMPLETE:
        raise SchemaError("the complete scenario has no amputation plan")
    frac = _WITHIN_FRAC[miss]

    def pat(amputed, w1=None, w2=None, w3=0.0, tail=Tail.RIGHT):
        return Pattern(
            amputed=frozenset(amputed),
            w1=w1 or {},
            w2=w2 or {},
            w3=w3,
            tail=tail,
            within_pattern_missing_frac=frac,
        )

    patterns = (
        pat(  # (1) outcome
            {"y"},
            w1={"x1": 5, "x2": 5, "x3": 1, "x5": -1, "x6": -1, "x7": 1, "x8": 1, "x10": 1},
            w2={"x6_sq": -0.5, "x4x9": 1.5, "x5x10": -0.5, "x3x8": 0.5},
        ),
        pat({"x7"}, w1={"x5": 1, "x6": 1}, w2={"x5x6": 1}),  # (2)
        pat(  # (3)
            {"x8"},
            w1={"x5": 1, "x6": 1, "x7": 1},
            w2={"x7_sq": 1, "x5x6": 1},
            w3=5.0,
        ),
        pat(  # (4)
            {"x9"},
            w1={"x3": 1, "x4": 1, "x5": 1},
            w2={"x5_sq": 1, "x3x4": 1},
            w3=5.0,
        ),
        pat(  # (5)
            {"x10"},
            w1={"x3": 1, "x4": 1, "x5": 1, "x9": 1},
            w2={"x4x5": 1},
            w3=5.0,
        ),
        pat({"y", "x7", "x8"}, w1={"x5": 1, "x6": 1}, tail=Tail.BOTH),  # (6)
        pat({"y", "x8", "x10"}, w1={"x5": 1}, tail=Tail.BOTH),  # (7)
        pat(  # (8)
            {"y", "x9", "x10"},
            w1={"x3": 1, "x4": 1},
            w2={"x5_sq": 0.5, "x3x4": 0.5},
            tail=Tail.BOTH,
        ),
    )
    return AmputationPlan(patterns=patterns, proportions=_PROPORTIONS[miss])


# ---------------------------------------------------------------------------
# scenario runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    missingness: Missingness
    impute: object = None  # ImputeMethod or None (required unless COMPLETE)
    methods: tuple = METHOD_NAMES
    pi_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    m: int = 25
    b: int = 100
    complete_case: bool = True
    method_params: tuple = ()  # (name, spec) overrides

    def __post_init__(self):
        if self.missingness is Missingness.COMPLETE and self.impute is not None:
            raise SchemaError("complete scenario must not specify imputation")
        if self.missingness is not Missingness.COMPLETE and self.impute is None:
            raise SchemaError("missingness scenarios require an imputation method")
        bad = [m for m in self.methods if m not in METHOD_NAMES]
        if bad:
            raise SchemaError(f"unknown methods {bad}")
        if self.m < 1 or self.b < 1:
            raise SchemaError("m and b must be >= 1")
        for pi in self.pi_grid:
            if not (0.0 <= pi <= 1.0):
                raise SchemaError("pi grid values must lie in [0, 1]")

    def spec_for(self, name: str):
        for nm, spec in self.method_params:
            if nm == name:
                return spec
        return default_method_spec(name)


@dataclass(frozen=True)
class SimResult:
    """Flat tables from one scenario run."""

    metrics_rows: tuple  # dicts: method, variant, pi, precision, ...
    power_rows: tuple  # dicts: method, variant, pi, variable, power
    frequency_rows: tuple  # dicts: method, variant, variable, frequency
    failures: tuple  # (replication, method, message)


def _metrics_row(method, variant, pi, scores, truth, m_effective):
    rep = aggregate(scores, truth)
    return (
        {
            "method": method,
            "variant": variant,
            "pi": "" if pi is None else pi,
            "precision": rep.precision,
            "recall": rep.recall,
            "f1": rep.f1,
            "f1_mean": rep.f1_mean,
            "type1": rep.type1,
            "m_effective": m_effective,
        },
        rep,
    )


def _run_replication(spec: ScenarioSpec, dgp: DgpSpec, transforms, plan, hm, mrep):
    """One Monte Carlo replication; returns accumulable per-rep records."""
    out = {"direct": [], "freq": [], "bi": [], "failures": []}
    d, _ = generate(dgp, rng=hm.split(0))
    d_run = d if plan is None else ampute(d, transforms, plan, rng=hm.split(1))
    for mi, method in enumerate(spec.methods):
        mspec = spec.spec_for(method)
        hsel = hm.split(2 + mi)
        if plan is None:
            try:
                sel = select_one(d_run, mspec, rng=hsel)
                out["direct"].append((method, "complete", sel))
            except Exception as exc:  # noqa: BLE001 - recorded, not masked
                log.warning("rep %d method %s failed: %s", mrep, method, exc)
                out["failures"].append((mrep, method, str(exc)))
            continue
        pi0 = DEFAULT_PI[method]
        try:
            run = select_with_missing(d_run, mspec, spec.impute, spec.b, pi0, rng=hsel)
            out["freq"].append((method, run.frequencies))
            for pi in spec.pi_grid:
                out["bi"].append((method, pi, run.at(pi)))
        except PipelineError as exc:
            log.warning("rep %d method %s pipeline failed: %s", mrep, method, exc)
            out["failures"].append((mrep, method, str(exc)))
        if spec.complete_case:
            cc_rows = np.flatnonzero(d_run.complete_row_mask())
            try:
                sel = select_one(d_run.take(cc_rows), mspec, rng=hsel.split(9999))
                out["direct"].append((method, "cc", sel))
            except Exception as exc:  # noqa: BLE001
                log.warning("rep %d method %s CC failed: %s", mrep, method, exc)
                out["failures"].append((mrep, f"{method}/cc", str(exc)))
    return out


def run_scenarios(spec: ScenarioSpec, dgp: DgpSpec, rng=None, n_threads: int = 1) -> SimResult:
    """M replications of generate -> (ampute ->) select -> score.

    Replications run on up to ``n_threads`` workers; every task derives its
    own random stream from the replication index, and records are merged in
    replication order, so results are identical for any thread count.
    """
    handle = rng if isinstance(rng, RngHandle) else RngHandle(dgp.seed)
    transforms = scenario_transforms()
    plan = (
        None
        if spec.missingness is Missingness.COMPLETE
        else build_scenario_plan(spec.missingness)
    )
    names = variable_names(dgp)
    truth = TruthSpec.from_names([f"x{i}" for i in range(1, N_USEFUL + 1)], names)

    if n_threads > 1 and spec.m > 1:
        from joblib import Parallel, delayed

        reps = Parallel(n_jobs=n_threads, backend="threading")(
            delayed(_run_replication)(spec, dgp, transforms, plan, handle.split(m), m)
            for m in range(spec.m)
        )
    else:
        reps = [
            _run_replication(spec, dgp, transforms, plan, handle.split(m), m)
            for m in range(spec.m)
        ]

    direct_sets: dict = {}  # (method, variant) -> list of frozensets
    run_freqs: dict = {}  # (method, "bi") -> list of frequency vectors
    bi_sets: dict = {}  # (method, pi) -> list of frozensets
    failures = []
    for rep in reps:
        for method, variant, sel in rep["direct"]:
            direct_sets.setdefault((method, variant), []).append(sel)
        for method, freq in rep["freq"]:
            run_freqs.setdefault((method, "bi"), []).append(freq)
        for method, pi, sel in rep["bi"]:
            bi_sets.setdefault((method, pi), []).append(sel)
        failures.extend(rep["failures"])

    metrics_rows, power_rows, frequency_rows = [], [], []

    def emit(method, variant, pi, sets):
        scores = [score(s, truth) for s in sets]
        row, rep = _metrics_row(method, variant, pi, scores, truth, len(sets))
        metrics_rows.append(row)
        for v in sorted(rep.power, key=_name_key):
            power_rows.append(
                {
                    "method": method,
                    "variant": variant,
                    "pi": "" if pi is None else pi,
                    "variable": v,
                    "power": rep.power[v],
                }
            )

    for method in spec.methods:
        if (method, "complete") in direct_sets:
            sets = direct_sets[(method, "complete")]
            emit(method, "complete", None, sets)
            freq = np.mean([[1.0 if nm in s else 0.0 for nm in names] for s in sets], axis=0)
            for nm, f in zip(names, freq):
                frequency_rows.append(
                    {"method": method, "variant": "complete", "variable": nm, "frequency": f}
                )
        for pi in spec.pi_grid:
            if (method, pi) in bi_sets:
                emit(method, "bi", pi, bi_sets[(method, pi)])
        if (method, "bi") in run_freqs:
            freq = np.mean(run_freqs[(method, "bi")], axis=0)
            for nm, f in zip(names, freq):
                frequency_rows.append(
                    {"method": method, "variant": "bi", "variable": nm, "frequency": f}
                )
        if (method, "cc") in direct_sets:
            emit(method, "cc", None, direct_sets[(method, "cc")])

    return SimResult(
        metrics_rows=tuple(metrics_rows),
        power_rows=tuple(power_rows),
        frequency_rows=tuple(frequency_rows),
        failures=tuple(failures),
    )


def _name_key(name: str):
    return (len(name), name)  # x2 before x10 without numeric parsing surprises


def write_table(path, rows, columns):
    """Write dict rows as CSV with a fixed column order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(c, "")) for c in columns) + "\n")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


METRICS_COLUMNS = (
    "method", "variant", "pi", "precision", "recall", "f1", "f1_mean",
    "type1", "m_effective",
)
POWER_COLUMNS = ("method", "variant", "pi", "variable", "power")
FREQUENCY_COLUMNS = ("method", "variant", "variable", "frequency")
