"""Single-imputation engines and the bootstrap-imputation driver.

Two engines fill masked cells:

* chained equations — initialize from observed marginals, then cycle through
  incomplete columns (least missing first), regressing each on all other
  columns. Continuous targets use least squares with predictive-mean matching
  (a random donor among the ``pmm_k`` observed rows whose fitted values are
  nearest); binary targets (including the outcome) use logistic regression
  with Bernoulli draws.
* iterative forest — initialize with means/modes, then refit a random forest
  per incomplete column and overwrite missing cells with its predictions,
  stopping when the normalized change criterion first increases and returning
  the previous iterate.

``bootstrap_impute`` draws B with-replacement resamples (masks travel with
their rows) and singly imputes each on its own RNG stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from .data import ColumnKind, DataMatrix, RngHandle
from .ensemble import fit_classification_forest, fit_regression_forest
from .errors import ImputationError
from .linear import fit_logistic

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainedEquations:
    iterations: int = 10
    pmm_k: int = 5

    def __post_init__(self):
        if self.iterations < 1:
            raise ImputationError("iterations must be >= 1")
        if self.pmm_k < 1:
            raise ImputationError("pmm_k must be >= 1")


@dataclass(frozen=True)
class IterativeForest:
    max_iterations: int = 10
    trees_per_forest: int = 100

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ImputationError("max_iterations must be >= 1")
        if self.trees_per_forest < 10:
            raise ImputationError("trees_per_forest must be >= 10")


ImputeMethod = Union[ChainedEquations, IterativeForest]


def _as_handle(rng):
    if isinstance(rng, RngHandle):
        return rng
    return RngHandle(0 if rng is None else int(rng))


def _visit_order(d: DataMatrix):
    """Incomplete targets sorted by increasing missing count; the outcome is
    scheduled like any other column. Returns a list of ('x', j) / ('y', -1)."""
    items = []
    for j in range(d.k):
        cnt = int(d.x_mask[:, j].sum())
        if cnt:
            if cnt == d.n:
                raise ImputationError(f"column {d.names[j]!r} has no observed values")
            items.append((cnt, j, ("x", j)))
    ymiss = int(d.y_mask.sum())
    if ymiss:
        if ymiss == d.n:
            raise ImputationError("outcome has no observed values")
        items.append((ymiss, d.k, ("y", -1)))
    items.sort(key=lambda t: (t[0], t[1]))
    return [t[2] for t in items]


def _ridge_lstsq(Z, t):
    """Least squares with a small-ridge fallback on singular designs."""
    A = Z.T @ Z
    c = Z.T @ t
    try:
        beta = np.linalg.solve(A, c)
        if np.all(np.isfinite(beta)):
            return beta
    except np.linalg.LinAlgError:
        pass
    lam = 1e-6 * float(np.trace(A)) / A.shape[0] + 1e-12
    log.warning("singular imputation design; ridge fallback lambda=%.3g", lam)
    return np.linalg.solve(A + lam * np.eye(A.shape[0]), c)


def impute_chained(d: DataMatrix, m: ChainedEquations = ChainedEquations(), rng=None) -> DataMatrix:
    """Parametric chained-equations single imputation."""
    order = _visit_order(d)
    if not order:
        return d
    gen = _as_handle(rng).generator()
    x = d.x.copy()
    y = d.y.copy()

    # initialize every missing cell from the column's observed marginal
    for kind, j in order:
        if kind == "x":
            mis = d.x_mask[:, j]
            obs_vals = x[~mis, j]
            x[mis, j] = gen.choice(obs_vals, size=int(mis.sum()), replace=True)
        else:
            mis = d.y_mask
            obs_vals = y[~mis]
            y[mis] = gen.choice(obs_vals, size=int(mis.sum()), replace=True)

    def design(exclude_j):
        cols = [x[:, jj] for jj in range(d.k) if jj != exclude_j]
        cols.append(y)
        return np.column_stack(cols) if cols else np.ones((d.n, 0))

    for _ in range(m.iterations):
        for kind, j in order:
            if kind == "x":
                mis = d.x_mask[:, j]
                Z = design(j)
                binary = d.kinds[j] is ColumnKind.BINARY
                target = x[:, j]
            else:
                mis = d.y_mask
                Z = x
                binary = True
                target = y
            obs = ~mis
            if binary:
                fit = fit_logistic(Z[obs], target[obs])
                if fit.ridged:
                    log.warning("ridge-stabilized logistic imputation model")
                eta = fit.intercept + Z[mis] @ fit.coef
                p = expit(np.clip(eta, -30.0, 30.0))
                target[mis] = (gen.random(int(mis.sum())) < p).astype(float)
            else:
                Z1 = np.column_stack([np.ones(d.n), Z])
                beta = _ridge_lstsq(Z1[obs], target[obs])
                pred_obs = Z1[obs] @ beta
                pred_mis = Z1[mis] @ beta
                donors = target[obs]
                kk = min(m.pmm_k, donors.size)
                dist = np.abs(pred_obs[None, :] - pred_mis[:, None])
                nearest = np.argpartition(dist, kk - 1, axis=1)[:, :kk]
                pick = gen.integers(0, kk, size=nearest.shape[0])
                target[mis] = donors[nearest[np.arange(nearest.shape[0]), pick]]

    return d.with_values(
        x, y, x_mask=np.zeros_like(d.x_mask), y_mask=np.zeros_like(d.y_mask)
    )


def _forest_criterion(d, x_new, y_new, x_old, y_old):
    """Normalized change over imputed cells: continuous SSq ratio plus the
    fraction of flipped binary cells (one combined scalar)."""
    num = den = 0.0
    changed = total_bin = 0
    for j in range(d.k):
        mis = d.x_mask[:, j]
        if not mis.any():
            continue
        if d.kinds[j] is ColumnKind.BINARY:
            changed += int(np.sum(x_new[mis, j] != x_old[mis, j]))
            total_bin += int(mis.sum())
        else:
            diff = x_new[mis, j] - x_old[mis, j]
            num += float(diff @ diff)
            den += float(x_new[mis, j] @ x_new[mis, j])
    if d.y_mask.any():
        changed += int(np.sum(y_new[d.y_mask] != y_old[d.y_mask]))
        total_bin += int(d.y_mask.sum())
    crit = 0.0
    if den > 0:
        crit += num / den
    elif num > 0:
        crit += np.inf
    if total_bin > 0:
        crit += changed / total_bin
    return crit


def impute_forest(d: DataMatrix, m: IterativeForest = IterativeForest(), rng=None) -> DataMatrix:
    """Iterative random-forest single imputation (missForest-style)."""
    order = _visit_order(d)
    if not order:
        return d
    handle = _as_handle(rng)
    x = d.x.copy()
    y = d.y.copy()

    # mean/mode initialization
    for kind, j in order:
        if kind == "x":
            mis = d.x_mask[:, j]
            obs_vals = x[~mis, j]
            if d.kinds[j] is ColumnKind.BINARY:
                fill = 1.0 if obs_vals.mean() >= 0.5 else 0.0
            else:
                fill = float(obs_vals.mean())
            x[mis, j] = fill
        else:
            obs_vals = y[~d.y_mask]
            y[d.y_mask] = 1.0 if obs_vals.mean() >= 0.5 else 0.0

    def predictors(exclude_j):
        cols = [x[:, jj] for jj in range(d.k) if jj != exclude_j]
        cols.append(y)
        return np.column_stack(cols)

    best_x, best_y = x.copy(), y.copy()
    prev_crit = None
    fit_counter = 0
    for _ in range(m.max_iterations):
        x_old, y_old = x.copy(), y.copy()
        for kind, j in order:
            hf = handle.split(fit_counter)
            fit_counter += 1
            if kind == "x":
                mis = d.x_mask[:, j]
                Z = predictors(j)
                target = x[:, j]
                binary = d.kinds[j] is ColumnKind.BINARY
            else:
                mis = d.y_mask
                Z = x
                target = y
                binary = True
            obs = ~mis
            if binary:
                f = fit_classification_forest(
                    Z[obs], target[obs], n_trees=m.trees_per_forest, rng=hf
                )
                target[mis] = (f.predict_proba(Z[mis]) >= 0.5).astype(float)
            else:
                f = fit_regression_forest(
                    Z[obs], target[obs], n_trees=m.trees_per_forest, rng=hf
                )
                target[mis] = f.predict_proba(Z[mis])
        crit = _forest_criterion(d, x, y, x_old, y_old)
        if prev_crit is not None and crit > prev_crit:
            x, y = best_x, best_y  # criterion rose: return the previous iterate
            break
        prev_crit = crit
        best_x, best_y = x.copy(), y.copy()
    return d.with_values(
        x, y, x_mask=np.zeros_like(d.x_mask), y_mask=np.zeros_like(d.y_mask)
    )


def impute(d: DataMatrix, method: ImputeMethod, rng=None) -> DataMatrix:
    if isinstance(method, ChainedEquations):
        return impute_chained(d, method, rng)
    if isinstance(method, IterativeForest):
        return impute_forest(d, method, rng)
    raise ImputationError(f"unknown imputation method {method!r}")


@dataclass(frozen=True)
class BootstrapImputeSet:
    """B singly-imputed bootstrap replicates plus bookkeeping."""

    b_requested: int
    replicates: tuple  # complete DataMatrix per successful replicate
    seeds: tuple  # stream index of each successful replicate
    failures: tuple  # (stream index, message) per failed replicate

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def bootstrap_impute(d: DataMatrix, b: int, method: ImputeMethod, rng=None) -> BootstrapImputeSet:
    """Resample rows with replacement B times and singly impute each draw."""
    if b < 1:
        raise ImputationError("B must be >= 1")
    handle = _as_handle(rng)
    reps, seeds, failures = [], [], []
    for i in range(b):
        hb = handle.split(i)
        rows = hb.split(0).generator().integers(0, d.n, size=d.n)
        sample = d.take(rows)
        try:
            reps.append(impute(sample, method, hb.split(1)))
            seeds.append(i)
        except ImputationError as exc:
            log.warning("replicate %d failed: %s", i, exc)
            failures.append((i, str(exc)))
    return BootstrapImputeSet(
        b_requested=b, replicates=tuple(reps), seeds=tuple(seeds), failures=tuple(failures)
    )
