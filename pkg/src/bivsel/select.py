"""Variable-selection procedures and bootstrap consolidation.

Six selectors share one interface: given complete data they return the set
of kept variable names. Tree-ensemble methods use recursive elimination —
rank variables once by full-model importance, iteratively drop the lowest
tenth, and keep the smallest candidate set whose error is within ``u``
binomial standard errors of the minimum. The Bayesian additive model is
thresholded against permutation-null inclusion proportions (local,
global-max, or global-SE rule). The parametric baselines delegate to
``linear``.

With incomplete data, ``select_with_missing`` runs selection on every singly
imputed bootstrap replicate and consolidates: variable k is retained when it
appears in at least a fraction ``pi`` of the replicate selections.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._bart import BartParams, fit_bart
from .data import DataMatrix, RngHandle
from .ensemble import (
    GbmParams,
    fit_crf,
    fit_gbm,
    fit_rf,
    forest_oob_error,
    gbm_importance,
    oob_importance,
)
from .errors import FitError, PipelineError, SelectionError
from .impute import ImputeMethod, bootstrap_impute
from .linear import fit_lasso_path, lasso_select, stepwise_select

log = logging.getLogger(__name__)


def _as_handle(rng):
    if isinstance(rng, RngHandle):
        return rng
    return RngHandle(0 if rng is None else int(rng))


# ---------------------------------------------------------------------------
# recursive elimination (RF / CRF / GBM)
# ---------------------------------------------------------------------------


class ErrorSource(enum.Enum):
    OOB = "oob"
    HOLDOUT50 = "holdout50"
    CV5 = "cv5"


@dataclass(frozen=True)
class EliminationSchedule:
    drop_frac: float = 0.1
    u: float = 1.0
    error_source: Optional[ErrorSource] = None  # None: OOB for forests,
    # holdout50 (n>=1000) / cv5 (n<1000) for boosting

    def __post_init__(self):
        if not (0.0 < self.drop_frac < 1.0):
            raise SelectionError("drop_frac must lie in (0, 1)")
        if self.u < 0:
            raise SelectionError("u must be >= 0")


def candidate_sets(order_by_importance: np.ndarray, drop_frac: float):
    """Nested variable subsets from iterated dropping of the least important.

    ``order_by_importance`` lists column indices from most to least important;
    each step removes ceil(drop_frac * current) from the tail.
    """
    sets = []
    current = list(order_by_importance)
    while True:
        sets.append(tuple(sorted(current)))
        if len(current) <= 1:
            break
        drop = math.ceil(drop_frac * len(current))
        current = current[: len(current) - drop]
        if not current:  # drop would empty the set: keep the single best
            current = [order_by_importance[0]]
    return sets


def _error_on(d, cols, learner, n_trees, source, rng, gbm_params):
    """(error, n_eval) for the learner restricted to ``cols``."""
    sub = d.take_columns([d.names[j] for j in cols])
    if learner in ("rf", "crf"):
        fitter = fit_rf if learner == "rf" else fit_crf
        model = fitter(sub, n_trees=n_trees, rng=rng.split(0))
        return forest_oob_error(model, sub)
    # boosting: no out-of-bag stream; use a holdout or cross-validation
    if source is ErrorSource.HOLDOUT50:
        perm = rng.split(1).generator().permutation(sub.n)
        half = sub.n // 2
        train, test = perm[:half], perm[half:]
        model = fit_gbm(sub.take(train), gbm_params, rng=rng.split(0))
        p = model.predict_proba(sub.x[test])
        err = float(np.mean((p >= 0.5) != (sub.y[test] >= 0.5)))
        return err, test.size
    if source is ErrorSource.CV5:
        perm = rng.split(1).generator().permutation(sub.n)
        wrong = 0
        for f, chunk in enumerate(np.array_split(perm, 5)):
            mask = np.ones(sub.n, dtype=bool)
            mask[chunk] = False
            model = fit_gbm(sub.take(np.flatnonzero(mask)), gbm_params, rng=rng.split(2 + f))
            p = model.predict_proba(sub.x[chunk])
            wrong += int(np.sum((p >= 0.5) != (sub.y[chunk] >= 0.5)))
        return wrong / sub.n, sub.n
    raise SelectionError(f"error source {source} not valid for learner {learner!r}")


def select_recursive(
    d: DataMatrix,
    learner: str,
    sched: EliminationSchedule = EliminationSchedule(),
    rng=None,
    n_trees_first: int = 5000,
    n_trees_rest: int = 2000,
    gbm_params: GbmParams = GbmParams(),
) -> frozenset:
    """Recursive elimination with importance ranked once on the full model."""
    if learner not in ("rf", "crf", "gbm"):
        raise SelectionError(f"unknown elimination learner {learner!r}")
    if d.k < 2:
        raise SelectionError("recursive elimination needs at least 2 variables")
    if not d.is_complete():
        raise SelectionError("recursive elimination requires fully observed data")
    handle = _as_handle(rng)
    source = sched.error_source
    if source is None:
        if learner == "gbm":
            source = ErrorSource.HOLDOUT50 if d.n >= 1000 else ErrorSource.CV5
        else:
            source = ErrorSource.OOB
    if learner != "gbm" and source is not ErrorSource.OOB:
        raise SelectionError("forest learners measure error out-of-bag")
    if learner == "gbm" and source is ErrorSource.OOB:
        raise SelectionError("boosting has no out-of-bag error; use holdout50 or cv5")

    # importance is computed once, on the full model, and never refreshed
    try:
        if learner == "gbm":
            full = fit_gbm(d, gbm_params, rng=handle.split(0))
            imp = gbm_importance(full)
        else:
            fitter = fit_rf if learner == "rf" else fit_crf
            full = fitter(d, n_trees=n_trees_first, rng=handle.split(0))
            imp = oob_importance(full, d, rng=handle.split(1))
    except FitError as exc:
        raise SelectionError(f"full-model fit failed: {exc}") from exc
    order = np.argsort(-imp, kind="stable")  # most important first
    sets = candidate_sets(order, sched.drop_frac)

    errors, evals = [], []
    for i, cols in enumerate(sets):
        n_trees = n_trees_first if i == 0 else n_trees_rest
        try:
            err, n_eval = _error_on(
                d, cols, learner, n_trees, source, handle.split(2 + i), gbm_params
            )
        except FitError as exc:
            raise SelectionError(
                f"fit failed at elimination step {i}: {exc}", replicate=None
            ) from exc
        errors.append(err)
        evals.append(n_eval)

    best = int(np.argmin(errors))
    e_min = errors[best]
    se = math.sqrt(e_min * (1.0 - e_min) / evals[best])
    cutoff = e_min + sched.u * se
    qualifying = [i for i in range(len(sets)) if errors[i] <= cutoff]
    pick = min(qualifying, key=lambda i: (len(sets[i]), errors[i]))
    return frozenset(d.names[j] for j in sets[pick])


# ---------------------------------------------------------------------------
# permutation-null thresholds for inclusion proportions
# ---------------------------------------------------------------------------


class ThresholdRule(enum.Enum):
    LOCAL = "local"
    GLOBAL_MAX = "global_max"
    GLOBAL_SE = "global_se"


@dataclass(frozen=True)
class PermutationThreshold:
    p: int = 100
    alpha: float = 0.05
    rule: ThresholdRule = ThresholdRule.LOCAL

    def __post_init__(self):
        if self.p < 20:
            raise SelectionError("permutation count must be >= 20")
        if not (0.0 < self.alpha < 0.5):
            raise SelectionError("alpha must lie in (0, 0.5)")


def bart_permutation_stats(
    d: DataMatrix, p: int, rng=None, params: BartParams = BartParams()
):
    """Inclusion proportions on real y plus the (p, K) permutation-null draws."""
    if d.k < 2:
        raise SelectionError("permutation selection needs at least 2 variables")
    if not d.is_complete():
        raise SelectionError("permutation selection requires fully observed data")
    handle = _as_handle(rng)
    props = fit_bart(d, params, rng=handle.split(0)).inclusion_props
    perm_gen = handle.split(1).generator()
    null = np.empty((p, d.k))
    for i in range(p):
        yp = perm_gen.permutation(d.y)
        dp = d.with_values(d.x, yp, x_mask=d.x_mask, y_mask=d.y_mask)
        null[i] = fit_bart(dp, params, rng=handle.split(2 + i)).inclusion_props
    return props, null


def apply_permutation_rule(
    props: np.ndarray,
    null: np.ndarray,
    names,
    rule: ThresholdRule = ThresholdRule.LOCAL,
    alpha: float = 0.05,
) -> frozenset:
    """Keep variables whose proportion exceeds the permutation-null cutoff."""
    props = np.asarray(props, dtype=float)
    null = np.asarray(null, dtype=float)
    n_perm, k = null.shape
    if rule is ThresholdRule.LOCAL:
        cut = np.quantile(null, 1.0 - alpha, axis=0, method="higher")
    elif rule is ThresholdRule.GLOBAL_MAX:
        cut = np.full(k, np.quantile(null.max(axis=1), 1.0 - alpha, method="higher"))
    elif rule is ThresholdRule.GLOBAL_SE:
        m = null.mean(axis=0)
        s = null.std(axis=0, ddof=1) if n_perm > 1 else np.zeros(k)
        if np.any(s == 0):
            log.warning("degenerate permutation spread; threshold falls back to the mean")
        # smallest C with per-variable coverage > 1 - alpha for every variable
        j = min(int(math.floor(n_perm * (1.0 - alpha))), n_perm - 1)
        q = np.sort(null, axis=0)[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            c_k = np.where(s > 0, np.maximum(0.0, (q - m) / s), 0.0)
        cut = m + float(c_k.max()) * s
    else:
        raise SelectionError(f"unknown threshold rule {rule!r}")
    return frozenset(nm for nm, pk, ck in zip(names, props, cut) if pk > ck)


def select_bart_permutation(
    d: DataMatrix,
    thr: PermutationThreshold = PermutationThreshold(),
    rng=None,
    params: BartParams = BartParams(),
) -> frozenset:
    props, null = bart_permutation_stats(d, thr.p, rng=rng, params=params)
    return apply_permutation_rule(props, null, d.names, thr.rule, thr.alpha)


# ---------------------------------------------------------------------------
# per-method dispatch
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BartSelect:
    thr: PermutationThreshold = PermutationThreshold()
    params: BartParams = BartParams()


@dataclass(frozen=True)
class RfSelect:
    sched: EliminationSchedule = EliminationSchedule()
    n_trees_first: int = 5000
    n_trees_rest: int = 2000


@dataclass(frozen=True)
class CrfSelect:
    sched: EliminationSchedule = EliminationSchedule()
    n_trees_first: int = 5000
    n_trees_rest: int = 2000


@dataclass(frozen=True)
class GbmSelect:
    sched: EliminationSchedule = EliminationSchedule()
    params: GbmParams = GbmParams()


@dataclass(frozen=True)
class LassoSelect:
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    folds: int = 10


@dataclass(frozen=True)
class StepwiseSelect:
    alpha: float = 0.05
    eps: float = 0.05


# default consolidation thresholds per method (configurable; midpoints of the
# per-method ranges that performed best in the reference simulations)
DEFAULT_PI = {
    "bart": 0.15,
    "rf": 0.15,
    "crf": 0.15,
    "gbm": 0.45,
    "lasso": 0.8,
    "stepwise": 0.65,
}

METHOD_NAMES = ("bart", "rf", "crf", "gbm", "lasso", "stepwise")


def default_method_spec(name: str):
    specs = {
        "bart": BartSelect,
        "rf": RfSelect,
        "crf": CrfSelect,
        "gbm": GbmSelect,
        "lasso": LassoSelect,
        "stepwise": StepwiseSelect,
    }
    if name not in specs:
        raise SelectionError(f"unknown selection method {name!r}")
    return specs[name]()


def select_one(d: DataMatrix, method, rng=None) -> frozenset:
    """Run one selector on complete data; returns kept variable names."""
    handle = _as_handle(rng)
    if isinstance(method, BartSelect):
        return select_bart_permutation(d, method.thr, rng=handle, params=method.params)
    if isinstance(method, RfSelect):
        return select_recursive(
            d, "rf", method.sched, rng=handle,
            n_trees_first=method.n_trees_first, n_trees_rest=method.n_trees_rest,
        )
    if isinstance(method, CrfSelect):
        return select_recursive(
            d, "crf", method.sched, rng=handle,
            n_trees_first=method.n_trees_first, n_trees_rest=method.n_trees_rest,
        )
    if isinstance(method, GbmSelect):
        return select_recursive(d, "gbm", method.sched, rng=handle, gbm_params=method.params)
    if isinstance(method, LassoSelect):
        path = fit_lasso_path(
            d, n_lambda=method.n_lambda,
            lambda_min_ratio=method.lambda_min_ratio,
            folds=method.folds, rng=handle,
        )
        return lasso_select(path)
    if isinstance(method, StepwiseSelect):
        return stepwise_select(d, alpha=method.alpha, eps=method.eps).selected
    raise SelectionError(f"unknown selection method {method!r}")


# ---------------------------------------------------------------------------
# consolidation across bootstrap replicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionRun:
    per_replicate: tuple  # frozenset per successful replicate
    names: tuple
    frequencies: np.ndarray  # selection frequency per name
    threshold: float
    final: frozenset
    failures: tuple = ()

    def at(self, pi: float) -> frozenset:
        """Consolidated set at another threshold (frequencies are kept).

        ``pi = 0`` is the degenerate inclusive threshold: every variable
        qualifies, since all frequencies are >= 0.
        """
        if not (0.0 <= pi <= 1.0):
            raise SelectionError("pi must lie in [0, 1]")
        return frozenset(
            nm for nm, f in zip(self.names, self.frequencies) if f >= pi
        )


def consolidate(per_replicate, pi: float, names) -> SelectionRun:
    """Selection frequency per variable and the threshold rule: keep k when
    it appears in at least a fraction ``pi`` of replicate selections."""
    reps = tuple(frozenset(s) for s in per_replicate)
    if not reps:
        raise SelectionError("no replicate selections to consolidate")
    if not (0.0 < pi <= 1.0):
        raise SelectionError("pi must lie in (0, 1]")
    names = tuple(names)
    known = set(names)
    for i, s in enumerate(reps):
        extra = s - known
        if extra:
            raise SelectionError(f"replicate {i} selected unknown variables {sorted(extra)}")
    freq = np.array([sum(1 for s in reps if nm in s) for nm in names], dtype=float)
    freq /= len(reps)
    final = frozenset(nm for nm, f in zip(names, freq) if f >= pi)
    return SelectionRun(
        per_replicate=reps, names=names, frequencies=freq, threshold=pi, final=final
    )


def select_with_missing(
    d: DataMatrix,
    method,
    impute_method: Optional[ImputeMethod],
    b: int,
    pi: float,
    rng=None,
) -> SelectionRun:
    """Bootstrap-impute, select per replicate, consolidate.

    Replicates whose imputation or selection fails are excluded (recorded in
    ``failures``); more than 20% failures aborts with a pipeline error.
    """
    handle = _as_handle(rng)
    if impute_method is None:
        if not d.is_complete():
            raise PipelineError(
                "incomplete data requires an imputation method; none given"
            )
        from .impute import ChainedEquations  # identity on complete data

        impute_method = ChainedEquations()
    boot = bootstrap_impute(d, b, impute_method, rng=handle)
    failures = list(boot.failures)
    sets = []
    for stream, rep in zip(boot.seeds, boot.replicates):
        try:
            sets.append(select_one(rep, method, rng=handle.split(stream).split(2)))
        except (SelectionError, FitError) as exc:
            log.warning("selection failed on replicate %d: %s", stream, exc)
            failures.append((stream, str(exc)))
    if len(failures) > 0.2 * b:
        raise PipelineError(
            f"{len(failures)} of {b} replicates failed (over the 20% budget)"
        )
    run = consolidate(sets, pi, d.names)
    return SelectionRun(
        per_replicate=run.per_replicate,
        names=run.names,
        frequencies=run.frequencies,
        threshold=run.threshold,
        final=run.final,
        failures=tuple(failures),
    )
