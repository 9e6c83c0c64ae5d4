"""Probit Bayesian additive regression trees.

A sum of ``m`` small trees models the latent index of a binary outcome:
P(y=1|x) = Phi(f(x)). Each sampler iteration augments truncated-normal
latents z, then backfits every tree with one Metropolis-Hastings structure
move (grow / prune / change) followed by conjugate normal draws of its
leaf values. Stochastic-search priors: a node at depth d splits with prior
probability a*(1+d)^-b, split rules are uniform over per-variable global
cutpoint grids, leaves are N(0, sigma_mu^2) with sigma_mu = 3/(k*sqrt(m)).

Variable importance is the inclusion proportion: the share of all splitting
rules that use each variable, averaged over retained posterior draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .data import DataMatrix, RngHandle
from .errors import FitError

_P_GROW, _P_PRUNE, _P_CHANGE = 0.25, 0.25, 0.5


@dataclass(frozen=True)
class BartParams:
    m: int = 50
    n_draws: int = 1100
    burn: int = 100
    a: float = 0.95
    b: float = 2.0
    k: float = 2.0
    numcut: int = 100
    min_leaf: int = 5
    keep_draws: bool = False

    def __post_init__(self):
        if self.burn >= self.n_draws:
            raise FitError("burn-in must be smaller than n_draws")
        if not (0.0 < self.a < 1.0):
            raise FitError("depth prior base must lie in (0, 1)")


@dataclass(frozen=True)
class BartModel:
    """Posterior summaries of the fitted sum-of-trees model."""

    m: int
    inclusion_props: np.ndarray  # (K,) mean share of splitting rules per var
    train_mean_prob: np.ndarray  # (n,) posterior mean Phi(f) on training rows
    var_counts: np.ndarray  # (kept, K) split counts per retained draw
    draws: Optional[tuple] = None  # per-draw tree snapshots when kept


class _BartTree:
    """One mutable tree: parallel node lists plus a row->leaf assignment."""

    __slots__ = ("feature", "threshold", "left", "right", "depth", "parent", "mu", "assign", "contrib")

    def __init__(self, n):
        self.feature = [-1]  # -1 leaf, -2 dead, >=0 split variable
        self.threshold = [0.0]
        self.left = [-1]
        self.right = [-1]
        self.depth = [0]
        self.parent = [-1]
        self.mu = [0.0]
        self.assign = np.zeros(n, dtype=np.int64)
        self.contrib = np.zeros(n)

    def leaves(self):
        return [i for i, f in enumerate(self.feature) if f == -1]

    def singly_internal(self):
        out = []
        for i, f in enumerate(self.feature):
            if f >= 0 and self.feature[self.left[i]] == -1 and self.feature[self.right[i]] == -1:
                out.append(i)
        return out

    def is_stump(self):
        return self.feature[0] == -1

    def split_var_counts(self, k):
        counts = np.zeros(k, dtype=np.int64)
        for f in self.feature:
            if f >= 0:
                counts[f] += 1
        return counts

    def snapshot(self):
        return (
            tuple(self.feature),
            tuple(self.threshold),
            tuple(self.left),
            tuple(self.right),
            tuple(self.mu),
        )


def _log_marginal(n, sr, v):
    # residuals ~ N(mu, 1), mu ~ N(0, v); constant terms cancel in ratios
    return -0.5 * math.log1p(n * v) + 0.5 * v * sr * sr / (1.0 + n * v)


def _move_probs(tree):
    if tree.is_stump():
        return 1.0, 0.0, 0.0
    return _P_GROW, _P_PRUNE, _P_CHANGE


def _cut_grids(X, numcut):
    # numcut equally spaced interior points per variable; "x < c" keeps both
    # children nonempty for any c strictly inside (min, max)
    grids = []
    for v in range(X.shape[1]):
        lo = float(X[:, v].min())
        hi = float(X[:, v].max())
        if hi <= lo:
            grids.append(np.empty(0))
            continue
        steps = np.arange(1, numcut + 1, dtype=float) / (numcut + 1)
        grids.append(lo + (hi - lo) * steps)
    return grids


def _draw_z(f, y1, gen):
    # inverse-CDF truncated normal: z ~ N(f, 1) restricted to the y side of 0
    u = gen.random(f.size)
    lo = ndtr(-f)  # P(z < 0)
    arg = np.where(y1, lo + u * (1.0 - lo), u * lo)
    return f + ndtri(np.clip(arg, 1e-15, 1.0 - 1e-15))


def fit_bart(d: DataMatrix, params: BartParams = BartParams(), rng=None) -> BartModel:
    """Run the sampler on complete data; same handle, same chain."""
    if not d.is_complete():
        raise FitError("fit_bart requires fully observed data; impute first")
    handle = rng if isinstance(rng, RngHandle) else RngHandle(0 if rng is None else int(rng))
    gen = handle.generator()
    X = np.ascontiguousarray(d.x)
    y1 = np.asarray(d.y) >= 0.5
    n, k = X.shape
    m = params.m
    grids = _cut_grids(X, params.numcut)
    sigma_mu = 3.0 / (params.k * math.sqrt(m))
    v = sigma_mu * sigma_mu
    a, b = params.a, params.b

    trees = [_BartTree(n) for _ in range(m)]
    f = np.zeros(n)
    z = _draw_z(f, y1, gen)

    kept = params.n_draws - params.burn
    var_counts = np.zeros((kept, k), dtype=np.int64)
    prob_sum = np.zeros(n)
    snapshots = [] if params.keep_draws else None

    def p_split(depth):
        return a * (1.0 + depth) ** (-b)

    for it in range(params.n_draws):
        for tree in trees:
            r = z - f + tree.contrib
            pg, pp, pc = _move_probs(tree)
            u_move = gen.random()
            accepted = False
            if u_move < pg:
                # grow
                leaves = tree.leaves()
                leaf = leaves[gen.integers(len(leaves))]
                rows = np.flatnonzero(tree.assign == leaf)
                var = int(gen.integers(k))
                grid = grids[var]
                if rows.size >= 2 * params.min_leaf and grid.size > 0:
                    cut = float(grid[gen.integers(grid.size)])
                    go_left = X[rows, var] < cut
                    nl = int(go_left.sum())
                    nr = rows.size - nl
                    if nl >= params.min_leaf and nr >= params.min_leaf:
                        rr = r[rows]
                        sl = float(rr[go_left].sum())
                        sp = float(rr.sum())
                        lik = (
                            _log_marginal(nl, sl, v)
                            + _log_marginal(nr, sp - sl, v)
                            - _log_marginal(rows.size, sp, v)
                        )
                        dep = tree.depth[leaf]
                        ps, ps1 = p_split(dep), p_split(dep + 1)
                        prior = (
                            math.log(ps) + 2.0 * math.log(1.0 - ps1) - math.log(1.0 - ps)
                        )
                        par = tree.parent[leaf]
                        w_now = len(tree.singly_internal())
                        w_star = w_now + 1
                        if par >= 0:
                            sib = (
                                tree.right[par]
                                if tree.left[par] == leaf
                                else tree.left[par]
                            )
                            if tree.feature[sib] == -1:
                                w_star -= 1  # parent stops being singly internal
                        prop = (
                            math.log(_P_PRUNE)
                            - math.log(w_star)
                            - math.log(pg)
                            + math.log(len(leaves))
                        )
                        if math.log(gen.random() + 1e-300) < lik + prior + prop:
                            lid = len(tree.feature)
                            for arr, lval, rval in (
                                (tree.feature, -1, -1),
                                (tree.threshold, 0.0, 0.0),
                                (tree.left, -1, -1),
                                (tree.right, -1, -1),
                                (tree.depth, dep + 1, dep + 1),
                                (tree.parent, leaf, leaf),
                                (tree.mu, 0.0, 0.0),
                            ):
                                arr.append(lval)
                                arr.append(rval)
                            tree.feature[leaf] = var
                            tree.threshold[leaf] = cut
                            tree.left[leaf] = lid
                            tree.right[leaf] = lid + 1
                            tree.assign[rows[go_left]] = lid
                            tree.assign[rows[~go_left]] = lid + 1
                            accepted = True
            elif u_move < pg + pp:
                # prune
                singly = tree.singly_internal()
                nd = singly[gen.integers(len(singly))]
                lid, rid = tree.left[nd], tree.right[nd]
                in_l = tree.assign == lid
                in_r = tree.assign == rid
                nl = int(in_l.sum())
                nr = int(in_r.sum())
                sl = float(r[in_l].sum())
                sr_ = float(r[in_r].sum())
                lik = (
                    _log_marginal(nl + nr, sl + sr_, v)
                    - _log_marginal(nl, sl, v)
                    - _log_marginal(nr, sr_, v)
                )
                dep = tree.depth[nd]
                ps, ps1 = p_split(dep), p_split(dep + 1)
                prior = math.log(1.0 - ps) - math.log(ps) - 2.0 * math.log(1.0 - ps1)
                n_leaves_star = len(tree.leaves()) - 1
                pg_star = 1.0 if n_leaves_star == 1 else _P_GROW
                prop = (
                    math.log(pg_star)
                    - math.log(n_leaves_star)
                    - math.log(pp)
                    + math.log(len(singly))
                )
                if math.log(gen.random() + 1e-300) < lik + prior + prop:
                    tree.feature[nd] = -1
                    tree.feature[lid] = -2
                    tree.feature[rid] = -2
                    tree.assign[in_l | in_r] = nd
                    accepted = True
            else:
                # change: re-draw the split rule of a singly internal node
                singly = tree.singly_internal()
                nd = singly[gen.integers(len(singly))]
                lid, rid = tree.left[nd], tree.right[nd]
                rows = np.flatnonzero((tree.assign == lid) | (tree.assign == rid))
                var = int(gen.integers(k))
                grid = grids[var]
                if grid.size > 0:
                    cut = float(grid[gen.integers(grid.size)])
                    go_left = X[rows, var] < cut
                    nl = int(go_left.sum())
                    nr = rows.size - nl
                    if nl >= params.min_leaf and nr >= params.min_leaf:
                        rr = r[rows]
                        s_new_l = float(rr[go_left].sum())
                        s_tot = float(rr.sum())
                        old_l = tree.assign[rows] == lid
                        s_old_l = float(rr[old_l].sum())
                        n_old_l = int(old_l.sum())
                        lik = (
                            _log_marginal(nl, s_new_l, v)
                            + _log_marginal(nr, s_tot - s_new_l, v)
                            - _log_marginal(n_old_l, s_old_l, v)
                            - _log_marginal(rows.size - n_old_l, s_tot - s_old_l, v)
                        )
                        if math.log(gen.random() + 1e-300) < lik:
                            tree.feature[nd] = var
                            tree.threshold[nd] = cut
                            tree.assign[rows[go_left]] = lid
                            tree.assign[rows[~go_left]] = rid
                            accepted = True
            del accepted

            # conjugate leaf draws given the (possibly updated) structure
            n_nodes = len(tree.feature)
            sums = np.bincount(tree.assign, weights=r, minlength=n_nodes)
            cnts = np.bincount(tree.assign, minlength=n_nodes)
            for leaf in tree.leaves():
                prec = cnts[leaf] + 1.0 / v
                tree.mu[leaf] = sums[leaf] / prec + gen.normal() / math.sqrt(prec)
            mu_arr = np.asarray(tree.mu)
            new_contrib = mu_arr[tree.assign]
            f += new_contrib - tree.contrib
            tree.contrib = new_contrib

        z = _draw_z(f, y1, gen)

        if it >= params.burn:
            j = it - params.burn
            for tree in trees:
                var_counts[j] += tree.split_var_counts(k)
            prob_sum += ndtr(f)
            if snapshots is not None:
                snapshots.append(tuple(tree.snapshot() for tree in trees))

    totals = var_counts.sum(axis=1)
    active = totals > 0
    if active.any():
        props = (var_counts[active] / totals[active, None]).mean(axis=0)
    else:
        props = np.zeros(k)
    return BartModel(
        m=m,
        inclusion_props=props,
        train_mean_prob=prob_sum / kept,
        var_counts=var_counts,
        draws=tuple(snapshots) if snapshots is not None else None,
    )
