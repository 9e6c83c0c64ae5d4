"""Forests (bagged Gini, conditional-inference) and second-order boosting."""

import numpy as np
import pytest
from conftest import pure_noise, toy_logistic

from bivsel import (
    FitError,
    GbmParams,
    RngHandle,
    fit_crf,
    fit_gbm,
    fit_rf,
    forest_oob_error,
    gbm_importance,
    logistic_grad_hess,
    oob_importance,
)
from bivsel.ensemble import (
    binomial_deviance,
    default_mtry,
    fit_classification_forest,
    fit_regression_forest,
    forest_oob_predictions,
)


def test_default_mtry_is_ceil_sqrt():
    assert [default_mtry(k) for k in (1, 4, 10, 40, 50)] == [1, 2, 4, 7, 8]


# ---------------------------------------------------------------------------
# bagged Gini forest
# ---------------------------------------------------------------------------


def test_rf_learns_signal_and_stays_honest_on_noise():
    d = toy_logistic(n=400, seed=21)
    f = fit_rf(d, n_trees=150, rng=RngHandle(1))
    err, n_eval = forest_oob_error(f, d)
    assert err < 0.30
    assert n_eval == d.n
    noise = pure_noise(n=300, seed=22)
    f_noise = fit_rf(noise, n_trees=150, rng=RngHandle(3))
    err_noise, _ = forest_oob_error(f_noise, noise)
    assert abs(err_noise - 0.5) < 0.15  # no better than coin flipping


def test_rf_bootstrap_bookkeeping():
    d = toy_logistic(n=120, seed=30)
    f = fit_rf(d, n_trees=20, rng=RngHandle(8))
    assert f.inbag.shape == (20, d.n)
    assert (f.inbag.sum(axis=1) == d.n).all()  # with-replacement, size n
    oob_frac = (f.inbag == 0).mean()
    assert 0.30 < oob_frac < 0.44  # ~ e^-1 of rows leave each bag
    p = f.predict_proba(d.x)
    assert ((0.0 <= p) & (p <= 1.0)).all()
    assert ((0.0 <= f.vote_share(d.x)) & (f.vote_share(d.x) <= 1.0)).all()


def test_rf_is_deterministic_given_handle():
    d = toy_logistic(n=150, seed=31)
    a = fit_rf(d, n_trees=25, rng=RngHandle(9))
    b = fit_rf(d, n_trees=25, rng=RngHandle(9))
    assert np.array_equal(a.inbag, b.inbag)
    assert np.allclose(a.predict_proba(d.x), b.predict_proba(d.x))


def test_oob_importance_separates_signal_from_noise():
    d = toy_logistic(n=400, seed=21)
    f = fit_rf(d, n_trees=150, rng=RngHandle(1))
    imp = oob_importance(f, d, rng=RngHandle(2))
    assert imp.shape == (d.k,)
    assert imp[:3].min() > 10 * max(imp[3:].max(), 1e-12)


def test_oob_importance_identity_shuffle_is_exactly_zero():
    d = toy_logistic(n=200, seed=33)
    f = fit_rf(d, n_trees=30, rng=RngHandle(10))
    imp = oob_importance(
        f, d, rng=RngHandle(11), shuffler=lambda gen, m: np.arange(m)
    )
    assert np.array_equal(imp, np.zeros(d.k))


def test_forest_requires_complete_data():
    d = toy_logistic(n=100, seed=34)
    xm = np.zeros_like(d.x, dtype=bool)
    xm[0, 0] = True
    holed = d.with_values(d.x, d.y, x_mask=xm)
    with pytest.raises(FitError):
        fit_rf(holed, n_trees=5)
    with pytest.raises(FitError):
        oob_importance(fit_rf(d, n_trees=5, rng=RngHandle(0)), holed)


# ---------------------------------------------------------------------------
# conditional-inference forest
# ---------------------------------------------------------------------------


def test_crf_learns_signal():
    d = toy_logistic(n=400, seed=21)
    f = fit_crf(d, n_trees=150, rng=RngHandle(4))
    err, _ = forest_oob_error(f, d)
    assert err < 0.35
    imp = oob_importance(f, d, rng=RngHandle(5))
    assert imp[:3].min() > imp[3:].max()


def test_crf_subsamples_without_replacement():
    d = toy_logistic(n=200, seed=35)
    f = fit_crf(d, n_trees=10, subsample_frac=0.632, rng=RngHandle(12))
    assert set(np.unique(f.inbag)) <= {0, 1}
    assert (f.inbag.sum(axis=1) == int(0.632 * d.n)).all()
    with pytest.raises(FitError):
        fit_crf(d, n_trees=5, subsample_frac=0.0)


# ---------------------------------------------------------------------------
# boosting
# ---------------------------------------------------------------------------


def test_gbm_training_deviance_decreases():
    d = toy_logistic(n=400, seed=21)
    m = fit_gbm(d, GbmParams(nrounds=60), rng=RngHandle(6))
    assert m.deviance.shape == (60,)
    assert m.deviance[-1] < 0.5 * m.deviance[0]
    assert (np.diff(m.deviance) <= 1e-9).all()


def test_gbm_importance_ranks_signal_first():
    d = toy_logistic(n=400, seed=21)
    m = fit_gbm(d, GbmParams(nrounds=60), rng=RngHandle(6))
    imp = gbm_importance(m)
    assert imp.shape == (d.k,)
    assert set(np.argsort(-imp)[:3]) == {0, 1, 2}
    assert (imp >= 0).all()


def test_gbm_prediction_scale():
    d = toy_logistic(n=200, seed=36)
    m = fit_gbm(d, GbmParams(nrounds=20), rng=RngHandle(7))
    raw = m.predict_raw(d.x)
    p = m.predict_proba(d.x)
    assert np.allclose(p, 1.0 / (1.0 + np.exp(-raw)))
    assert ((0.0 < p) & (p < 1.0)).all()


def test_gbm_colsample_one_uses_all_columns():
    d = toy_logistic(n=200, k_signal=2, k_noise=2, seed=37)
    a = fit_gbm(d, GbmParams(nrounds=10, colsample=1.0), rng=RngHandle(14))
    b = fit_gbm(d, GbmParams(nrounds=10, colsample=1.0), rng=RngHandle(15))
    # column subsampling disabled: no RNG enters the fit, so seeds agree
    assert np.allclose(a.predict_raw(d.x), b.predict_raw(d.x))


def test_logistic_grad_hess_matches_finite_differences():
    raws = np.linspace(-6.0, 6.0, 41)
    for y in (0.0, 1.0):
        yv = np.full_like(raws, y)
        g, h = logistic_grad_hess(raws, yv)

        def loss(f):
            return np.log1p(np.exp(-np.abs(f))) + np.maximum(f, 0.0) - y * f

        eps_g, eps_h = 1e-6, 1e-4
        g_num = (loss(raws + eps_g) - loss(raws - eps_g)) / (2 * eps_g)
        h_num = (loss(raws + eps_h) - 2 * loss(raws) + loss(raws - eps_h)) / eps_h**2
        assert np.max(np.abs(g - g_num) / np.maximum(np.abs(g_num), 1e-8)) < 1e-4
        assert np.max(np.abs(h - h_num) / np.maximum(np.abs(h_num), 1e-8)) < 1e-4


def test_binomial_deviance_basics():
    y = np.array([0.0, 1.0])
    assert binomial_deviance(y, np.array([0.0, 1.0])) < 1e-9
    assert binomial_deviance(y, np.array([0.5, 0.5])) == pytest.approx(
        2.0 * np.log(2.0)
    )


# ---------------------------------------------------------------------------
# raw-array imputation forests
# ---------------------------------------------------------------------------


def test_regression_forest_tracks_signal():
    gen = RngHandle(40).generator()
    X = gen.normal(size=(300, 4))
    y = 2.0 * X[:, 0] + gen.normal(size=300) * 0.5
    f = fit_regression_forest(X, y, n_trees=60, rng=RngHandle(16))
    agg, cnt = forest_oob_predictions(f, X)
    has = cnt > 0
    resid = y[has] - agg[has]
    assert np.mean(resid**2) < np.var(y)  # beats predicting the mean


def test_classification_forest_probability_output():
    gen = RngHandle(41).generator()
    X = gen.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(float)
    f = fit_classification_forest(X, y, n_trees=40, rng=RngHandle(17))
    p = f.predict_proba(X)
    assert ((0.0 <= p) & (p <= 1.0)).all()
    assert np.mean((p >= 0.5) == (y == 1.0)) > 0.9
