"""Single decision trees: exact greedy growth under pluggable split rules.

The grower considers every midpoint between consecutive distinct sorted
values of each candidate variable, maximizes the criterion's gain, and
breaks exact ties toward the lowest variable index and then the lowest
split point. A row is routed left iff ``x < split_point``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _ctree
from .data import RngHandle
from .errors import FitError


@dataclass(frozen=True)
class Gini:
    """Binary-classification impurity decrease; leaf value is mean(y)."""

    code = _ctree.GINI


@dataclass(frozen=True)
class SquaredError:
    """Regression variance reduction; leaf value is mean(y)."""

    code = _ctree.SSE


@dataclass(frozen=True)
class BoostGain:
    """Second-order boosting gain on (gradient, hessian) responses.

    gain = 1/2 [ G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - (G_L+G_R)^2/(H_L+H_R+lam) ] - gamma

    Leaf value is the regularized Newton weight -G/(H+lam).
    """

    lam: float = 1.0
    gamma: float = 0.0
    code = _ctree.BOOST


@dataclass(frozen=True)
class CondTest:
    """Best-cut chi-square association test with p-value stopping.

    Splits only while the Bonferroni-adjusted p-value (over cuts within a
    variable, then over candidate variables) stays at or below ``alpha``.
    Used by the conditional-inference forest.
    """

    alpha: float = 0.05
    code = _ctree.CTEST


@dataclass(frozen=True)
class TreeNode:
    """Nested read-only view of one node; ``is_leaf`` nodes carry a value."""

    value: float
    n: int
    split_var: Optional[int] = None
    split_point: Optional[float] = None
    gain: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.split_var is None


@dataclass(frozen=True)
class Tree:
    """Flat-array tree; node 0 is the root, feature < 0 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_node: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        """Length of the longest root-to-leaf path (single leaf: 0)."""
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        best = 0
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
            else:
                best = max(best, int(depth[node]))
        return best

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        _ctree.predict_kernel(
            self.feature, self.threshold, self.left, self.right, self.value, X, out
        )
        return out

    def root(self) -> TreeNode:
        """Materialize the nested node view (tests and inspection)."""

        def build(i: int) -> TreeNode:
            if self.feature[i] < 0:
                return TreeNode(value=float(self.value[i]), n=int(self.n_node[i]))
            return TreeNode(
                value=float(self.value[i]),
                n=int(self.n_node[i]),
                split_var=int(self.feature[i]),
                split_point=float(self.threshold[i]),
                gain=float(self.gain[i]),
                left=build(int(self.left[i])),
                right=build(int(self.right[i])),
            )

        return build(0)

    def split_counts(self, k: int) -> np.ndarray:
        """Number of internal nodes splitting on each of k variables."""
        counts = np.zeros(k, dtype=np.int64)
        for f in self.feature:
            if f >= 0:
                counts[f] += 1
        return counts


def _seed_of(rng) -> int:
    if rng is None:
        return 0
    if isinstance(rng, RngHandle):
        return rng.bits64()
    return int(rng) & ((1 << 64) - 1)


def grow_tree(
    X,
    y,
    crit=Gini(),
    *,
    max_depth: Optional[int] = None,
    min_leaf: int = 1,
    min_split: int = 2,
    mtry: Optional[int] = None,
    cols=None,
    sample_weight=None,
    rng=None,
) -> Tree:
    """Grow one tree by exact greedy search.

    Parameters
    ----------
    X : ndarray (n, K)
    y : ndarray
        Responses: class labels in {0,1} for Gini/CondTest, regression
        targets for SquaredError, or an (n, 2) array of (gradient, hessian)
        pairs for BoostGain.
    crit : Gini | SquaredError | BoostGain | CondTest
    max_depth : int or None
        None grows until the stopping rules fire (purity, size, gain).
    min_leaf : int
        Minimum rows in each child of any split.
    min_split : int
        Minimum rows in a node for a split to be attempted.
    mtry : int or None
        Number of candidate variables sampled (without replacement) per
        node; None examines all of ``cols``.
    cols : sequence of int, optional
        Variable indices eligible for splitting (default: all columns).
    sample_weight : int ndarray (n,), optional
        Row multiplicities; rows with weight 0 are excluded from the fit
        (bagged samples pass their bootstrap counts here). All counting
        (min_leaf, min_split, purity) is on weighted totals.
    rng : RngHandle | int | None
        Source of the per-node variable subsampling. Irrelevant (and may be
        omitted) when mtry covers all columns.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise FitError("X must be a non-empty 2-d array")
    n, k = X.shape
    y = np.asarray(y, dtype=np.float64)
    if isinstance(crit, BoostGain):
        if y.shape != (n, 2):
            raise FitError("BoostGain expects (n, 2) gradient/hessian pairs")
        gvec = np.ascontiguousarray(y[:, 0])
        hvec = np.ascontiguousarray(y[:, 1])
        yvec = np.zeros(n)
    else:
        if y.shape != (n,):
            raise FitError("y must have one response per row")
        yvec = np.ascontiguousarray(y)
        gvec = hvec = np.zeros(1)
    if isinstance(crit, (Gini, CondTest)) and not np.isin(yvec, (0.0, 1.0)).all():
        raise FitError("classification responses must be 0/1")
    cols = (
        np.arange(k, dtype=np.int64)
        if cols is None
        else np.asarray(sorted(cols), dtype=np.int64)
    )
    if cols.size == 0 or cols.min() < 0 or cols.max() >= k:
        raise FitError("cols out of range")
    mtry = int(cols.size if mtry is None else mtry)
    if mtry < 1:
        raise FitError("mtry must be >= 1")
    if sample_weight is None:
        weight = np.ones(n, dtype=np.int64)
    else:
        weight = np.asarray(sample_weight, dtype=np.int64)
        if weight.shape != (n,) or (weight < 0).any():
            raise FitError("sample_weight must be nonnegative, one per row")
        if not weight.any():
            raise FitError("all sample weights are zero")
    depth_cap = _ctree.NO_DEPTH_LIMIT if max_depth is None else int(max_depth)
    if depth_cap < 0:
        raise FitError("max_depth must be >= 0")
    lam = getattr(crit, "lam", 0.0)
    gamma = getattr(crit, "gamma", 0.0)
    alpha = getattr(crit, "alpha", 0.0)
    out = _ctree.grow_kernel(
        X,
        yvec,
        gvec,
        hvec,
        weight,
        crit.code,
        depth_cap,
        int(min_leaf),
        int(min_split),
        cols,
        mtry,
        float(lam),
        float(gamma),
        float(alpha),
        np.uint64(_seed_of(rng)),
    )
    return Tree(*out)


def predict_tree(tree, x) -> float:
    """Route one row through a :class:`Tree` or nested :class:`TreeNode`."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(tree, TreeNode):
        node = tree
        while not node.is_leaf:
            node = node.left if x[node.split_var] < node.split_point else node.right
        return node.value
    return float(tree.predict(x[None, :])[0])
