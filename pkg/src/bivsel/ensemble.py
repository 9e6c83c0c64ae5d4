"""Ensemble learners over the tree kernel.

Three forest-style learners share this module:

* :func:`fit_rf` - bagged classification forest (Gini, grown to purity)
* :func:`fit_crf` - conditional-inference forest: without-replacement
  subsampling and p-value-gated splits
* :func:`fit_gbm` - second-order logistic gradient boosting

plus :func:`oob_importance` (permutation importance on out-of-bag rows,
shared by rf and crf) and :func:`gbm_importance` (total split gain).
The Bayesian additive model lives in :mod:`bivsel._bart` and is re-exported
here as :func:`fit_bart`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _ctree
from ._bart import BartModel, BartParams, fit_bart  # noqa: F401 (re-export)
from .data import DataMatrix, RngHandle
from .errors import FitError
from .trees import BoostGain, CondTest, Gini, SquaredError, Tree, grow_tree


def _as_handle(rng) -> RngHandle:
    if rng is None:
        return RngHandle(0)
    if isinstance(rng, RngHandle):
        return rng
    return RngHandle(int(rng))


def _require_complete(d: DataMatrix, who: str):
    if not d.is_complete():
        raise FitError(f"{who} requires fully observed data; impute first")


def default_mtry(k: int) -> int:
    """ceil(sqrt(K)), the forest default for candidate variables per split."""
    return int(math.ceil(math.sqrt(k)))


@dataclass(frozen=True)
class ForestModel:
    """Fitted forest: trees plus per-tree in-bag row multiplicities.

    ``inbag[t, i]`` is how many times row i entered tree t's training
    sample; zero marks the row out-of-bag for that tree. Classification
    trees store P(y=1) in their leaves.
    """

    trees: tuple[Tree, ...]
    inbag: np.ndarray
    kind: str  # "rf" | "crf" | "reg"
    mtry: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        """Mean of tree outputs (probability for classification forests)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def vote_share(self, X) -> np.ndarray:
        """Fraction of trees whose own prediction is class 1."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X) >= 0.5
        return acc / len(self.trees)


def _predict_rows(tree: Tree, X, rows) -> np.ndarray:
    out = np.empty(rows.size)
    _ctree.predict_rows_kernel(
        tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, rows, out
    )
    return out


def fit_rf(
    d: DataMatrix,
    n_trees: int = 500,
    mtry: Optional[int] = None,
    min_node: int = 1,
    rng=None,
) -> ForestModel:
    """Bagged Gini forest grown to purity (or ``min_node``-sized leaves).

    Each tree sees a with-replacement bootstrap of the n rows, recorded in
    the returned model's ``inbag`` multiplicities. Same handle, same forest.
    """
    _require_complete(d, "fit_rf")
    if d.n < 2:
        raise FitError("need at least two rows")
    if n_trees < 1:
        raise FitError("n_trees must be positive")
    handle = _as_handle(rng)
    X = np.ascontiguousarray(d.x)
    y = np.asarray(d.y)
    n, k = X.shape
    mtry = default_mtry(k) if mtry is None else int(mtry)
    trees = []
    inbag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        ht = handle.split(t)
        counts = np.bincount(
            ht.split(0).generator().integers(0, n, size=n), minlength=n
        )
        inbag[t] = counts
        trees.append(
            grow_tree(
                X,
                y,
                Gini(),
                min_leaf=min_node,
                min_split=max(2, 2 * min_node),
                mtry=mtry,
                sample_weight=counts,
                rng=ht.split(1),
            )
        )
    return ForestModel(tuple(trees), inbag, "rf", mtry)


def fit_crf(
    d: DataMatrix,
    n_trees: int = 500,
    mtry: Optional[int] = None,
    alpha_tree: float = 0.05,
    subsample_frac: float = 0.632,
    min_node: int = 7,
    min_split: int = 20,
    rng=None,
) -> ForestModel:
    """Conditional-inference forest.

    Trees are grown on without-replacement subsamples. At each node the
    mtry candidate variables are scored by a best-cut two-sample chi-square
    test of response rates; the minimum p-value (Bonferroni-adjusted over
    cuts, then over candidates) must stay at or below ``alpha_tree`` for
    the split to happen. Aggregation averages tree probabilities.
    """
    _require_complete(d, "fit_crf")
    if not 0.0 < subsample_frac <= 1.0:
        raise FitError("subsample_frac must be in (0, 1]")
    handle = _as_handle(rng)
    X = np.ascontiguousarray(d.x)
    y = np.asarray(d.y)
    n, k = X.shape
    n_sub = max(2, int(math.floor(subsample_frac * n)))
    mtry = default_mtry(k) if mtry is None else int(mtry)
    trees = []
    inbag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        ht = handle.split(t)
        rows = ht.split(0).generator().choice(n, size=n_sub, replace=False)
        counts = np.zeros(n, dtype=np.int64)
        counts[rows] = 1
        inbag[t] = counts
        trees.append(
            grow_tree(
                X,
                y,
                CondTest(alpha_tree),
                min_leaf=min_node,
                min_split=min_split,
                mtry=mtry,
                sample_weight=counts,
                rng=ht.split(1),
            )
        )
    return ForestModel(tuple(trees), inbag, "crf", mtry)


def fit_regression_forest(
    X,
    y,
    n_trees: int = 100,
    mtry: Optional[int] = None,
    min_node: int = 5,
    rng=None,
) -> ForestModel:
    """Bagged squared-error forest on raw arrays (imputation workhorse)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    handle = _as_handle(rng)
    mtry = max(1, k // 3) if mtry is None else int(mtry)
    trees = []
    inbag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        ht = handle.split(t)
        counts = np.bincount(
            ht.split(0).generator().integers(0, n, size=n), minlength=n
        )
        inbag[t] = counts
        trees.append(
            grow_tree(
                X,
                y,
                SquaredError(),
                min_leaf=min_node,
                min_split=max(2, 2 * min_node),
                mtry=mtry,
                sample_weight=counts,
                rng=ht.split(1),
            )
        )
    return ForestModel(tuple(trees), inbag, "reg", mtry)


def fit_classification_forest(
    X, y, n_trees: int = 100, mtry: Optional[int] = None, min_node: int = 1, rng=None
) -> ForestModel:
    """Gini forest on raw arrays (imputation workhorse)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    handle = _as_handle(rng)
    mtry = default_mtry(k) if mtry is None else int(mtry)
    trees = []
    inbag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        ht = handle.split(t)
        counts = np.bincount(
            ht.split(0).generator().integers(0, n, size=n), minlength=n
        )
        inbag[t] = counts
        trees.append(
            grow_tree(
                X,
                y,
                Gini(),
                min_leaf=min_node,
                min_split=max(2, 2 * min_node),
                mtry=mtry,
                sample_weight=counts,
                rng=ht.split(1),
            )
        )
    return ForestModel(tuple(trees), inbag, "cls", mtry)


def forest_oob_predictions(f: ForestModel, X):
    """Out-of-bag aggregate per row.

    Returns (aggregate, n_oob_trees) where the aggregate is the mean hard
    vote for rf ("majority of per-tree classes") and the mean probability
    for crf/reg. Rows never out of bag carry NaN.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    acc = np.zeros(n)
    cnt = np.zeros(n, dtype=np.int64)
    for t, tree in enumerate(f.trees):
        rows = np.flatnonzero(f.inbag[t] == 0)
        if rows.size == 0:
            continue
        pred = _predict_rows(tree, X, rows)
        if f.kind == "rf":
            acc[rows] += pred >= 0.5
        else:
            acc[rows] += pred
        cnt[rows] += 1
    out = np.full(n, np.nan)
    has = cnt > 0
    out[has] = acc[has] / cnt[has]
    return out, cnt


def forest_oob_error(f: ForestModel, d: DataMatrix):
    """Out-of-bag misclassification rate and the number of rows it used."""
    agg, cnt = forest_oob_predictions(f, d.x)
    has = cnt > 0
    if not has.any():
        raise FitError("no out-of-bag rows; use more trees")
    pred = agg[has] >= 0.5
    err = float(np.mean(pred != (d.y[has] >= 0.5)))
    return err, int(has.sum())


def oob_importance(f: ForestModel, d: DataMatrix, rng=None, shuffler=None):
    """Permutation importance on out-of-bag rows.

    importance_k = mean over trees of (per-tree OOB accuracy minus the
    accuracy after permuting column k within that tree's OOB rows).

    Parameters
    ----------
    shuffler : callable (generator, m) -> permutation, optional
        Override for the permutation draw (tests inject identity here).
    """
    _require_complete(d, "oob_importance")
    handle = _as_handle(rng)
    X = np.ascontiguousarray(d.x)
    y = np.asarray(d.y) >= 0.5
    k = d.k
    diff = np.zeros(k)
    used = 0
    for t, tree in enumerate(f.trees):
        rows = np.flatnonzero(f.inbag[t] == 0)
        if rows.size == 0:
            continue
        gen = handle.split(t).generator()
        truth = y[rows]
        acc0 = float(np.mean((_predict_rows(tree, X, rows) >= 0.5) == truth))
        out = np.empty(rows.size)
        for v in range(k):
            perm = shuffler(gen, rows.size) if shuffler else gen.permutation(rows.size)
            col = X[rows[perm], v]
            _ctree.predict_perm_kernel(
                tree.feature,
                tree.threshold,
                tree.left,
                tree.right,
                tree.value,
                X,
                rows,
                v,
                col,
                out,
            )
            diff[v] += acc0 - float(np.mean((out >= 0.5) == truth))
        used += 1
    if used == 0:
        raise FitError("no tree had out-of-bag rows")
    return diff / used


@dataclass(frozen=True)
class GbmParams:
    """Boosting knobs; colsample=None means ceil(sqrt(K))/K per tree."""

    nrounds: int = 200
    eta: float = 0.1
    max_depth: int = 6
    lam: float = 1.0
    gamma: float = 0.0
    colsample: Optional[float] = None


@dataclass(frozen=True)
class BoostModel:
    """Additive tree model on the log-odds scale, starting from 0."""

    trees: tuple[Tree, ...]
    eta: float
    k: int
    deviance: np.ndarray = field(repr=False)  # training deviance per round

    def predict_raw(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return self.eta * acc

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.predict_raw(X))


def _sigmoid(v):
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def binomial_deviance(y, p) -> float:
    """Mean -2 log-likelihood with probabilities clipped away from 0/1."""
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-2.0 * np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def logistic_grad_hess(raw, y):
    """Per-row gradient and curvature of the logistic loss at margin ``raw``.

    The loss is -[y*raw - log(1 + exp(raw))]; its first two derivatives in
    the margin are p - y and p(1 - p) with p = sigmoid(raw).
    """
    p = _sigmoid(np.asarray(raw, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return p - y, p * (1.0 - p)


def fit_gbm(d: DataMatrix, params: GbmParams = GbmParams(), rng=None) -> BoostModel:
    """Second-order logistic boosting.

    Per round: with p = sigmoid(F), gradients g = p - y and hessians
    h = p(1-p) feed a BoostGain tree grown on a per-round column subset;
    leaves carry -G/(H+lam) and F steps by eta times the tree output.
    """
    _require_complete(d, "fit_gbm")
    handle = _as_handle(rng)
    X = np.ascontiguousarray(d.x)
    y = np.asarray(d.y)
    n, k = X.shape
    frac = params.colsample
    n_cols = default_mtry(k) if frac is None else max(1, int(math.ceil(frac * k)))
    n_cols = min(n_cols, k)
    crit = BoostGain(lam=params.lam, gamma=params.gamma)
    raw = np.zeros(n)
    trees = []
    dev = np.empty(params.nrounds)
    for t in range(params.nrounds):
        ht = handle.split(t)
        g, h = logistic_grad_hess(raw, y)
        gh = np.column_stack([g, h])
        if n_cols >= k:
            cols = None
        else:
            cols = ht.split(0).generator().choice(k, size=n_cols, replace=False)
        tree = grow_tree(
            X, gh, crit, max_depth=params.max_depth, cols=cols, rng=ht.split(1)
        )
        trees.append(tree)
        raw += params.eta * tree.predict(X)
        dev[t] = binomial_deviance(y, _sigmoid(raw))
    return BoostModel(tuple(trees), params.eta, k, dev)


def gbm_importance(m: BoostModel, k: Optional[int] = None) -> np.ndarray:
    """Total BoostGain accumulated by each variable over all splits."""
    k = m.k if k is None else k
    total = np.zeros(k)
    for tree in m.trees:
        for node in range(tree.n_nodes):
            f = tree.feature[node]
            if f >= 0:
                total[f] += tree.gain[node]
    return total
