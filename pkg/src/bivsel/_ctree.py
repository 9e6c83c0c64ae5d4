"""Compiled exact-greedy CART kernel shared by every tree learner.

One grow routine serves four split rules, selected by an integer code:

* ``GINI``  - binary-classification impurity decrease
* ``SSE``   - regression variance reduction
* ``BOOST`` - second-order boosting gain on (gradient, hessian) pairs
* ``CTEST`` - best-cut two-sample chi-square with Bonferroni-adjusted
  p-value stopping (conditional-inference style growth)

Contract details the callers rely on:

* split points are midpoints of consecutive distinct sorted values
* a row goes left iff ``x < cut``
* ties in gain break toward the lowest variable index, then the lowest cut
* node numbering is preorder (root 0, left subtree before right)
"""

import math

import numpy as np
from numba import njit

U64 = np.uint64

GINI = 0
SSE = 1
BOOST = 2
CTEST = 3

NO_DEPTH_LIMIT = 1 << 30


@njit(cache=True, inline="always")
def _rand_next(state):
    # splitmix64: threaded state keeps the kernel free of global RNGs
    state = state + U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    z = z ^ (z >> U64(31))
    return state, z


@njit(cache=True)
def grow_kernel(
    X,
    y,
    gvec,
    hvec,
    w,
    crit,
    max_depth,
    min_leaf,
    min_split,
    cols,
    mtry,
    lam,
    gamma,
    alpha,
    seed,
):
    # w holds integer row multiplicities (bootstrap counts); rows with w == 0
    # never enter the tree, so a bagged sample sorts only ~63% of the rows
    n = X.shape[0]
    idx = np.empty(n, dtype=np.int64)
    nn = 0
    for r in range(n):
        if w[r] > 0:
            idx[nn] = r
            nn += 1
    cap = 2 * nn + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    nnode = np.zeros(cap, dtype=np.int64)

    tmp = np.empty(nn, dtype=np.int64)
    vals = np.empty(nn)
    ncols = np.int64(len(cols))
    perm = np.empty(ncols, dtype=np.int64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_dep = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = nn
    stack_dep[0] = 0
    top = 1
    n_nodes = 1
    state = U64(seed)

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_dep[top]
        s = hi - lo

        sw = 0.0
        sy = 0.0
        syy = 0.0
        sg = 0.0
        sh = 0.0
        if crit == BOOST:
            for t in range(lo, hi):
                r = idx[t]
                wt = float(w[r])
                sw += wt
                sg += wt * gvec[r]
                sh += wt * hvec[r]
            value[node] = -sg / (sh + lam)
        else:
            for t in range(lo, hi):
                r = idx[t]
                wt = float(w[r])
                v = y[r]
                sw += wt
                sy += wt * v
                syy += wt * v * v
            value[node] = sy / sw
        nnode[node] = np.int64(sw)

        if depth >= max_depth or sw < min_split or sw < 2 * min_leaf:
            continue
        if (crit == GINI or crit == CTEST) and (sy <= 0.0 or sy >= sw):
            continue
        if crit == SSE and syy - sy * sy / sw <= 0.0:
            continue

        if mtry >= ncols:
            ncand = ncols
            for t in range(ncols):
                perm[t] = cols[t]
        else:
            for t in range(ncols):
                perm[t] = cols[t]
            for t in range(mtry):
                state, z = _rand_next(state)
                j = t + np.int64(z % U64(ncols - t))
                swp = perm[t]
                perm[t] = perm[j]
                perm[j] = swp
            ncand = mtry
            for a in range(1, ncand):
                key = perm[a]
                b = a - 1
                while b >= 0 and perm[b] > key:
                    perm[b + 1] = perm[b]
                    b -= 1
                perm[b + 1] = key

        best_gain = -np.inf
        best_var = np.int64(-1)
        best_cut = 0.0
        best_p = np.inf
        best_stat = 0.0
        tested = 0
        gini_parent = 0.0
        if crit == GINI:
            p = sy / sw
            gini_parent = 2.0 * p * (1.0 - p)

        for ci in range(ncand):
            v = perm[ci]
            for t in range(s):
                vals[t] = X[idx[lo + t], v]
            order = np.argsort(vals[:s], kind="mergesort")

            acc1 = 0.0
            acc2 = 0.0
            cw = 0.0
            var_stat = -np.inf
            var_cut = 0.0
            var_cuts = 0
            for t in range(1, s):
                rprev = idx[lo + order[t - 1]]
                wt = float(w[rprev])
                cw += wt
                if crit == BOOST:
                    acc1 += wt * gvec[rprev]
                    acc2 += wt * hvec[rprev]
                else:
                    acc1 += wt * y[rprev]
                lo_v = vals[order[t - 1]]
                hi_v = vals[order[t]]
                if hi_v == lo_v:
                    continue
                if cw < min_leaf or sw - cw < min_leaf:
                    continue
                cut = 0.5 * (lo_v + hi_v)
                if not (cut > lo_v):
                    cut = hi_v
                nl = cw
                nr = sw - cw
                if crit == GINI:
                    pl = acc1 / nl
                    pr = (sy - acc1) / nr
                    g = (
                        gini_parent
                        - (nl / sw) * 2.0 * pl * (1.0 - pl)
                        - (nr / sw) * 2.0 * pr * (1.0 - pr)
                    )
                    if g > best_gain:
                        best_gain = g
                        best_var = v
                        best_cut = cut
                elif crit == SSE:
                    sr = sy - acc1
                    g = acc1 * acc1 / nl + sr * sr / nr - sy * sy / sw
                    if g > best_gain:
                        best_gain = g
                        best_var = v
                        best_cut = cut
                elif crit == BOOST:
                    gl = acc1
                    hl = acc2
                    gr = sg - gl
                    hr = sh - hl
                    g = (
                        0.5
                        * (
                            gl * gl / (hl + lam)
                            + gr * gr / (hr + lam)
                            - sg * sg / (sh + lam)
                        )
                        - gamma
                    )
                    if g > best_gain:
                        best_gain = g
                        best_var = v
                        best_cut = cut
                else:
                    pl = acc1 / nl
                    pr = (sy - acc1) / nr
                    pbar = sy / sw
                    denom = pbar * (1.0 - pbar) * (1.0 / nl + 1.0 / nr)
                    stat = (pl - pr) * (pl - pr) / denom
                    var_cuts += 1
                    if stat > var_stat:
                        var_stat = stat
                        var_cut = cut

            if crit == CTEST and var_cuts > 0:
                tested += 1
                # Bonferroni over the cuts examined for this variable
                pv = var_cuts * math.erfc(math.sqrt(var_stat / 2.0))
                if pv < best_p:
                    best_p = pv
                    best_stat = var_stat
                    best_var = v
                    best_cut = var_cut

        if crit == CTEST:
            if best_var < 0:
                continue
            padj = best_p * tested
            if padj > alpha:
                continue
            gain[node] = best_stat
        else:
            if best_var < 0 or best_gain <= 0.0:
                continue
            gain[node] = best_gain

        nl_cnt = 0
        for t in range(lo, hi):
            if X[idx[t], best_var] < best_cut:
                tmp[nl_cnt] = idx[t]
                nl_cnt += 1
        nr_cnt = nl_cnt
        for t in range(lo, hi):
            if not (X[idx[t], best_var] < best_cut):
                tmp[nr_cnt] = idx[t]
                nr_cnt += 1
        for t in range(s):
            idx[lo + t] = tmp[t]
        mid = lo + nl_cnt

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = np.int32(best_var)
        threshold[node] = best_cut
        left[node] = lid
        right[node] = rid
        stack_node[top] = rid
        stack_lo[top] = mid
        stack_hi[top] = hi
        stack_dep[top] = depth + 1
        top += 1
        stack_node[top] = lid
        stack_lo[top] = lo
        stack_hi[top] = mid
        stack_dep[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        gain[:n_nodes],
        nnode[:n_nodes],
    )


@njit(cache=True)
def predict_kernel(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@njit(cache=True)
def predict_rows_kernel(feature, threshold, left, right, value, X, rows, out):
    for ii in range(rows.size):
        i = rows[ii]
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[ii] = value[node]


@njit(cache=True)
def predict_perm_kernel(
    feature, threshold, left, right, value, X, rows, var, col_perm, out
):
    # predictions over `rows` with column `var` replaced by `col_perm`
    for ii in range(rows.size):
        i = rows[ii]
        node = 0
        while feature[node] >= 0:
            f = feature[node]
            xv = col_perm[ii] if f == var else X[i, f]
            if xv < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[ii] = value[node]
