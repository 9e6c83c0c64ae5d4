"""Chained-equations and iterative-forest imputation plus bootstrap replication."""

import numpy as np
import pytest
from conftest import toy_logistic

from bivsel import (
    ChainedEquations,
    ImputationError,
    IterativeForest,
    RngHandle,
    bootstrap_impute,
    impute,
)
from bivsel.sim import DgpSpec, generate


def holed_benchmark(n=200, miss=0.25, seed=93, mask_seed=94):
    """Benchmark draw with MCAR holes in x7..x9 and the outcome."""
    d, _ = generate(DgpSpec(n=n, n_noise_cont=2, n_noise_bin=2, seed=seed))
    gen = RngHandle(mask_seed).generator()
    xm = np.zeros_like(d.x, dtype=bool)
    for j in (6, 7, 8):
        xm[gen.random(d.n) < miss, j] = True
    ym = gen.random(d.n) < 0.2
    x = np.where(xm, np.nan, d.x)
    y = np.where(ym, np.nan, d.y)
    return d, d.with_values(x, y, x_mask=xm, y_mask=ym), xm, ym


def test_method_validation():
    with pytest.raises(ImputationError):
        ChainedEquations(iterations=0)
    with pytest.raises(ImputationError):
        ChainedEquations(pmm_k=0)
    with pytest.raises(ImputationError):
        IterativeForest(max_iterations=0)
    with pytest.raises(ImputationError):
        IterativeForest(trees_per_forest=5)


@pytest.mark.parametrize("method", [ChainedEquations(), IterativeForest()])
def test_complete_data_is_returned_unchanged(method):
    d = toy_logistic(n=80, seed=90)
    assert impute(d, method, rng=RngHandle(91)) == d


def test_chained_fills_everything_and_keeps_observed_cells():
    full, holed, xm, ym = holed_benchmark()
    imp = impute(holed, ChainedEquations(), rng=RngHandle(95))
    assert imp.is_complete()
    assert not imp.x_mask.any() and not imp.y_mask.any()
    assert np.allclose(imp.x[~xm], full.x[~xm])
    assert np.array_equal(imp.y[~ym], full.y[~ym])


def test_chained_continuous_imputations_are_observed_donors():
    full, holed, xm, _ = holed_benchmark()
    imp = impute(holed, ChainedEquations(), rng=RngHandle(95))
    for j in (6, 7, 8):
        observed = set(full.x[~xm[:, j], j])
        assert all(v in observed for v in imp.x[xm[:, j], j])


def test_chained_binary_imputations_are_binary():
    _, holed, _, ym = holed_benchmark()
    imp = impute(holed, ChainedEquations(), rng=RngHandle(95))
    assert set(np.unique(imp.y[ym])) <= {0.0, 1.0}


def test_chained_is_deterministic():
    _, holed, _, _ = holed_benchmark()
    a = impute(holed, ChainedEquations(iterations=3), rng=RngHandle(96))
    b = impute(holed, ChainedEquations(iterations=3), rng=RngHandle(96))
    c = impute(holed, ChainedEquations(iterations=3), rng=RngHandle(97))
    assert a == b
    assert a != c


def test_forest_fills_and_beats_column_means():
    full, holed, xm, _ = holed_benchmark(n=300, seed=98, mask_seed=99)
    imp = impute(holed, IterativeForest(), rng=RngHandle(100))
    assert imp.is_complete()
    sse_forest = sse_mean = ss_tot = 0.0
    for j in (6, 7, 8):
        m = xm[:, j]
        truth = full.x[m, j]
        sse_forest += np.sum((imp.x[m, j] - truth) ** 2)
        sse_mean += np.sum((full.x[~m, j].mean() - truth) ** 2)
        ss_tot += np.sum((truth - truth.mean()) ** 2)
    assert np.sqrt(sse_forest / ss_tot) < np.sqrt(sse_mean / ss_tot)


def test_forest_is_deterministic():
    _, holed, _, _ = holed_benchmark(n=150)
    a = impute(holed, IterativeForest(max_iterations=3, trees_per_forest=20),
               rng=RngHandle(101))
    b = impute(holed, IterativeForest(max_iterations=3, trees_per_forest=20),
               rng=RngHandle(101))
    assert a == b


def test_unknown_method_rejected():
    d = toy_logistic(n=60, seed=102)
    with pytest.raises(ImputationError):
        impute(d, object())


def test_fully_missing_column_is_an_error():
    d = toy_logistic(n=60, seed=103)
    xm = np.zeros_like(d.x, dtype=bool)
    xm[:, 2] = True
    x = np.where(xm, np.nan, d.x)
    holed = d.with_values(x, d.y, x_mask=xm)
    with pytest.raises(ImputationError):
        impute(holed, ChainedEquations(), rng=RngHandle(104))


# ---------------------------------------------------------------------------
# bootstrap replication
# ---------------------------------------------------------------------------


def test_bootstrap_impute_produces_complete_replicates():
    _, holed, _, _ = holed_benchmark()
    boot = bootstrap_impute(holed, 6, ChainedEquations(iterations=3),
                            rng=RngHandle(96))
    assert boot.b_requested == 6
    assert len(boot.replicates) == 6
    assert boot.n_failed == 0
    assert boot.seeds == (0, 1, 2, 3, 4, 5)
    assert all(r.is_complete() and r.n == holed.n for r in boot.replicates)


def test_bootstrap_resamples_rows_with_replacement():
    d = toy_logistic(n=500, seed=97)
    boot = bootstrap_impute(d, 4, ChainedEquations(iterations=1), rng=RngHandle(98))
    for rep in boot.replicates:
        distinct = len(np.unique(rep.x[:, 0])) / d.n
        assert 0.55 < distinct < 0.72  # ~ 1 - 1/e distinct rows


def test_bootstrap_is_deterministic_and_validates_b():
    _, holed, _, _ = holed_benchmark(n=120)
    a = bootstrap_impute(holed, 3, ChainedEquations(iterations=2), rng=RngHandle(105))
    b = bootstrap_impute(holed, 3, ChainedEquations(iterations=2), rng=RngHandle(105))
    assert all(x == y for x, y in zip(a.replicates, b.replicates))
    with pytest.raises(ImputationError):
        bootstrap_impute(holed, 0, ChainedEquations())
