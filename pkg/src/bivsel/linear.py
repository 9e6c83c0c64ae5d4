"""Parametric baselines: L1-penalized logistic regression and backward
stepwise logistic selection.

The lasso path is fit by iteratively reweighted least squares with cyclic
coordinate descent on the quadratic surrogate (soft-threshold updates,
active-set sweeps, warm starts along a decreasing lambda grid). Columns are
standardized internally; reported coefficients are on the original scale.
Stepwise removes the weakest variable by Wald p-value while allowing removed
variables to re-enter at the slightly stricter level alpha*(1-eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.special import erfc, expit

from .data import DataMatrix, RngHandle
from .errors import FitError, SelectionError

_ETA_CAP = 30.0  # linear-predictor cap guarding against separation blowup


def _as_generator(rng):
    if isinstance(rng, RngHandle):
        return rng.generator()
    return RngHandle(0 if rng is None else int(rng)).generator()


# ---------------------------------------------------------------------------
# plain logistic regression (shared by stepwise and the imputation engines)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    coef: np.ndarray  # (k,)
    cov: np.ndarray  # (k+1, k+1) inverse Fisher information, intercept first
    converged: bool
    ridged: bool  # True when a ridge fallback stabilized the solve


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> LogisticFit:
    """Maximum-likelihood logistic fit via IRLS with a ridge fallback.

    A singular or non-finite Newton system is retried with a small ridge
    (1e-6 of the mean Fisher diagonal) and the result is flagged.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape if X.ndim == 2 else (X.shape[0], 0)
    Z = np.column_stack([np.ones(n), X]) if k else np.ones((n, 1))
    beta = np.zeros(Z.shape[1])
    ybar = float(np.clip(y.mean(), 1e-10, 1 - 1e-10))
    beta[0] = math.log(ybar / (1.0 - ybar))
    ridged = False
    converged = False
    info = np.eye(Z.shape[1])
    for _ in range(max_iter):
        eta = np.clip(Z @ beta, -_ETA_CAP, _ETA_CAP)
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-10)
        info = Z.T @ (Z * w[:, None])
        grad = Z.T @ (y - p)
        try:
            step = np.linalg.solve(info, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            ridged = True
            lam = 1e-6 * float(np.trace(info)) / info.shape[0] + 1e-12
            step = np.linalg.solve(info + lam * np.eye(info.shape[0]), grad)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        ridged = True
        lam = 1e-6 * float(np.trace(info)) / info.shape[0] + 1e-12
        cov = np.linalg.inv(info + lam * np.eye(info.shape[0]))
    return LogisticFit(
        intercept=float(beta[0]),
        coef=np.array(beta[1:]),
        cov=cov,
        converged=converged,
        ridged=ridged,
    )


def wald_p_values(fit: LogisticFit) -> np.ndarray:
    """Two-sided Wald p-value per slope coefficient (intercept excluded)."""
    se = np.sqrt(np.maximum(np.diag(fit.cov)[1:], 1e-300))
    z = np.abs(fit.coef) / se
    return erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# lasso path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LassoPath:
    """Coefficient path on the original scale plus cross-validated deviance."""

    lambdas: np.ndarray  # decreasing
    intercepts: np.ndarray  # (L,)
    coefs: np.ndarray  # (L, K), original scale
    cv_mean: Optional[np.ndarray]  # per-lambda mean CV deviance
    cv_se: Optional[np.ndarray]  # its standard error over folds
    names: tuple
    flagged: bool  # separation cap engaged somewhere along the path


def _standardize(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mean) / sd, mean, sd


@njit(cache=True)
def _cd_path_kernel(Xs, y, lambdas, eta_cap, max_outer, max_inner, tol):
    n, k = Xs.shape
    L = lambdas.size
    b0s = np.zeros(L)
    betas = np.zeros((L, k))
    beta = np.zeros(k)
    ybar = y.mean()
    if ybar < 1e-10:
        ybar = 1e-10
    if ybar > 1.0 - 1e-10:
        ybar = 1.0 - 1e-10
    b0 = np.log(ybar / (1.0 - ybar))
    capped = False
    eta = np.empty(n)
    w = np.empty(n)
    r = np.empty(n)
    den = np.empty(k)
    for li in range(L):
        lam = lambdas[li]
        for _outer in range(max_outer):
            beta_in = beta.copy()
            b0_in = b0
            sw = 0.0
            for i in range(n):
                e = b0
                for j in range(k):
                    e += Xs[i, j] * beta[j]
                if e > eta_cap:
                    e = eta_cap
                    capped = True
                elif e < -eta_cap:
                    e = -eta_cap
                    capped = True
                eta[i] = e
                p = 1.0 / (1.0 + np.exp(-e))
                wi = p * (1.0 - p)
                if wi < 1e-10:
                    wi = 1e-10
                w[i] = wi
                sw += wi
                r[i] = (y[i] - p) / wi  # working residual z - eta
            for j in range(k):
                s = 0.0
                for i in range(n):
                    s += w[i] * Xs[i, j] * Xs[i, j]
                den[j] = s / n
            # inner CD on the quadratic surrogate, active-set sweeps
            full_pass = True
            for _inner in range(max_inner):
                delta = 0.0
                for j in range(k):
                    bj = beta[j]
                    if not full_pass and bj == 0.0:
                        continue
                    num = 0.0
                    for i in range(n):
                        num += w[i] * Xs[i, j] * r[i]
                    num = num / n + den[j] * bj
                    if den[j] > 0.0:
                        if num > lam:
                            bj_new = (num - lam) / den[j]
                        elif num < -lam:
                            bj_new = (num + lam) / den[j]
                        else:
                            bj_new = 0.0
                    else:
                        bj_new = 0.0
                    if bj_new != bj:
                        step = bj_new - bj
                        for i in range(n):
                            r[i] -= Xs[i, j] * step
                        beta[j] = bj_new
                        if abs(step) > delta:
                            delta = abs(step)
                wr = 0.0
                for i in range(n):
                    wr += w[i] * r[i]
                step0 = wr / sw
                if step0 != 0.0:
                    for i in range(n):
                        r[i] -= step0
                    b0 += step0
                    if abs(step0) > delta:
                        delta = abs(step0)
                if delta < tol:
                    if full_pass:
                        break
                    full_pass = True  # converged on active set: verify fully
                else:
                    full_pass = False
            dmax = abs(b0 - b0_in)
            for j in range(k):
                dj = abs(beta[j] - beta_in[j])
                if dj > dmax:
                    dmax = dj
            if dmax < 1e-8:
                break
        b0s[li] = b0
        for j in range(k):
            betas[li, j] = beta[j]
    return b0s, betas, capped


def _cd_solve(Xs, y, lambdas, max_outer=30, max_inner=1000, tol=1e-9):
    """Coordinate-descent logistic lasso on standardized columns.

    Returns (intercepts, coefs in standardized scale, capped_flag).
    """
    b0s, betas, capped = _cd_path_kernel(
        np.ascontiguousarray(Xs, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(lambdas, dtype=np.float64),
        _ETA_CAP,
        max_outer,
        max_inner,
        tol,
    )
    return b0s, betas, bool(capped)


def _deviance(y, p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-2.0 * np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def fit_lasso_path(
    d: DataMatrix,
    n_lambda: int = 100,
    lambda_min_ratio: float = 1e-3,
    folds: int = 10,
    rng=None,
) -> LassoPath:
    """Fit the penalized path on a decreasing lambda grid with K-fold CV."""
    if not d.is_complete():
        raise FitError("fit_lasso_path requires fully observed data; impute first")
    X = np.asarray(d.x, dtype=float)
    y = np.asarray(d.y, dtype=float)
    n, k = X.shape
    if k == 0:
        raise FitError("no predictor columns")
    Xs, mean, sd = _standardize(X)
    lam_max = float(np.max(np.abs(Xs.T @ (y - y.mean())))) / n
    if lam_max <= 0:
        lam_max = 1e-3
    lambdas = lam_max * np.exp(
        np.linspace(0.0, math.log(lambda_min_ratio), n_lambda)
    )
    b0s, betas_std, capped = _cd_solve(Xs, y, lambdas)

    cv_mean = cv_se = None
    if folds and folds >= 2:
        gen = _as_generator(rng)
        order = gen.permutation(n)
        assign = np.zeros(n, dtype=int)
        for f, chunk in enumerate(np.array_split(order, folds)):
            assign[chunk] = f
        dev = np.zeros((folds, lambdas.size))
        for f in range(folds):
            tr = assign != f
            te = ~tr
            Xs_f, mean_f, sd_f = _standardize(X[tr])
            b0f, bf, cap_f = _cd_solve(Xs_f, y[tr], lambdas)
            capped = capped or cap_f
            Xte = (X[te] - mean_f) / sd_f
            eta = b0f[None, :] + Xte @ bf.T  # (n_te, L)
            eta = np.clip(eta, -_ETA_CAP, _ETA_CAP)
            p = expit(eta)
            yt = y[te][:, None]
            pc = np.clip(p, 1e-12, 1 - 1e-12)
            dev[f] = -2.0 * np.mean(yt * np.log(pc) + (1 - yt) * np.log(1 - pc), axis=0)
        cv_mean = dev.mean(axis=0)
        cv_se = dev.std(axis=0, ddof=1) / math.sqrt(folds)

    coefs = betas_std / sd[None, :]
    intercepts = b0s - coefs @ mean
    return LassoPath(
        lambdas=lambdas,
        intercepts=intercepts,
        coefs=coefs,
        cv_mean=cv_mean,
        cv_se=cv_se,
        names=d.names,
        flagged=capped,
    )


def lasso_select(path: LassoPath) -> frozenset:
    """Support at the one-standard-error lambda of the CV deviance curve."""
    if path.cv_mean is None:
        idx = path.lambdas.size - 1 if path.lambdas.size > 1 else 0
    else:
        best = int(np.argmin(path.cv_mean))
        limit = path.cv_mean[best] + path.cv_se[best]
        idx = int(np.argmax(path.cv_mean <= limit))  # largest lambda within 1 SE
    active = np.flatnonzero(path.coefs[idx] != 0.0)
    return frozenset(path.names[j] for j in active)


# ---------------------------------------------------------------------------
# backward stepwise with re-entry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepwiseStep:
    action: str  # "remove" | "add_back"
    variable: str
    p_value: float


@dataclass(frozen=True)
class StepwiseTrace:
    steps: tuple
    selected: frozenset
    alpha: float
    alpha2: float
    flagged: bool  # ridge fallback engaged in some fit


def stepwise_select(d: DataMatrix, alpha: float = 0.05, eps: float = 0.05) -> StepwiseTrace:
    """Backward elimination by largest Wald p-value with re-entry at
    alpha*(1-eps); terminates when neither a removal nor a re-entry applies."""
    if not d.is_complete():
        raise SelectionError("stepwise_select requires fully observed data")
    if not (0 < alpha < 1) or not (0 < eps < 1):
        raise SelectionError("alpha and eps must lie in (0, 1)")
    alpha2 = alpha * (1.0 - eps)
    X = np.asarray(d.x, dtype=float)
    y = np.asarray(d.y, dtype=float)
    n, k = X.shape
    names = list(d.names)
    if k == 0:
        return StepwiseTrace(steps=(), selected=frozenset(), alpha=alpha, alpha2=alpha2, flagged=False)

    current = list(range(k))
    if n <= k + 1:
        # full model not estimable: keep the n//2 most marginally significant
        marginal = []
        for j in range(k):
            fit = fit_logistic(X[:, [j]], y)
            marginal.append((wald_p_values(fit)[0], j))
        marginal.sort()
        keep = max(1, n // 2)
        current = sorted(j for _, j in marginal[:keep])

    steps = []
    removed: list[int] = []
    flagged = False
    seen = {tuple(current)}
    max_steps = max(1, 2 * k * (k + 1))

    def try_remove():
        nonlocal flagged
        if not current:
            return False
        fit = fit_logistic(X[:, current], y)
        flagged = flagged or fit.ridged
        pvals = wald_p_values(fit)
        worst = int(np.argmax(pvals))
        if pvals[worst] <= alpha:
            return False
        var = current.pop(worst)
        removed.append(var)
        steps.append(StepwiseStep("remove", names[var], float(pvals[worst])))
        return True

    def try_reenter():
        # re-entry candidate: the removed variable most significant when added
        nonlocal flagged, current
        best_p, best_j = None, None
        for j in removed:
            cols = sorted(current + [j])
            fit_j = fit_logistic(X[:, cols], y)
            flagged = flagged or fit_j.ridged
            p_j = float(wald_p_values(fit_j)[cols.index(j)])
            if best_p is None or p_j < best_p:
                best_p, best_j = p_j, j
        if best_p is None or best_p >= alpha2:
            return False
        removed.remove(best_j)
        current = sorted(current + [best_j])
        steps.append(StepwiseStep("add_back", names[best_j], best_p))
        return True

    while len(steps) < max_steps:
        acted = try_remove()
        acted = try_reenter() or acted  # re-test removed vars after each removal
        if not acted:
            break
        state = tuple(current)
        if state in seen:
            break  # revisited model: stop rather than cycle
        seen.add(state)
    return StepwiseTrace(
        steps=tuple(steps),
        selected=frozenset(names[j] for j in current),
        alpha=alpha,
        alpha2=alpha2,
        flagged=flagged,
    )
