"""Benchmark generator moments, scenario plans, and the Monte Carlo runner."""

import numpy as np
import pytest

from bivsel import (
    ChainedEquations,
    ColumnKind,
    Missingness,
    RngHandle,
    ScenarioSpec,
    SchemaError,
    generate,
    run_scenarios,
    scenario_transforms,
)
from bivsel.select import LassoSelect, RfSelect
from bivsel.sim import (
    DgpSpec,
    FREQUENCY_COLUMNS,
    METRICS_COLUMNS,
    N_USEFUL,
    POWER_COLUMNS,
    variable_names,
    write_table,
)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def test_dgp_spec_validation():
    with pytest.raises(SchemaError):
        DgpSpec(n=49)
    with pytest.raises(SchemaError):
        DgpSpec(n=100, n_noise_cont=-1)
    with pytest.raises(SchemaError):
        DgpSpec(n=100, gamma_param="rate-shape")


def test_variable_names_and_kinds():
    dgp = DgpSpec(n=100, n_noise_cont=4, n_noise_bin=3)
    names = variable_names(dgp)
    assert names == tuple(f"x{i}" for i in range(1, 18))
    d, truth = generate(dgp)
    assert d.names == names
    assert truth.useful == {f"x{i}" for i in range(1, N_USEFUL + 1)}
    kinds = list(d.kinds)
    assert kinds[:2] == [ColumnKind.BINARY] * 2
    assert kinds[2:10] == [ColumnKind.CONTINUOUS] * 8
    assert kinds[10:14] == [ColumnKind.CONTINUOUS] * 4
    assert kinds[14:] == [ColumnKind.BINARY] * 3


def test_generator_moments():
    d, _ = generate(DgpSpec(n=20000, seed=11))
    assert set(np.unique(d.col("x1"))) == {0.0, 1.0}
    assert abs(d.col("x1").mean() - 0.5) < 0.02
    assert abs(d.col("x2").mean() - 0.5) < 0.02
    for nm in ("x3", "x4", "x5"):
        assert abs(d.col(nm).mean()) < 0.03
        assert abs(d.col(nm).std() - 1.0) < 0.03
    # two-parameter gamma read as shape-rate: mean 4/6, variance 4/36
    assert abs(d.col("x6").mean() - 2 / 3) < 0.02
    assert abs(d.col("x6").var() - 1 / 9) < 0.02
    # conditional structure of x7 leaves a standard-normal residual
    resid = d.col("x7") - (
        -0.4 * d.col("x5") + 0.4 * d.col("x6") + 0.3 * d.col("x5") * d.col("x6")
    )
    assert abs(resid.mean()) < 0.03
    assert abs(resid.std() - 1.0) < 0.03
    assert set(np.unique(d.y)) == {0.0, 1.0}
    assert 0.03 < d.y.mean() < 0.10  # rare-event outcome


def test_gamma_reading_switch():
    d, _ = generate(DgpSpec(n=20000, seed=11, gamma_param="shape-scale"))
    assert abs(d.col("x6").mean() - 24.0) < 0.5


def test_generate_determinism_and_rng_override():
    dgp = DgpSpec(n=200, seed=14)
    a, _ = generate(dgp)
    b, _ = generate(dgp)
    assert a == b
    c, _ = generate(dgp, rng=RngHandle(15))
    assert a != c


def test_scenario_transforms_cover_score_inputs():
    t = scenario_transforms()
    assert len(t.derived) == 9
    ops = {dc.op for dc in t.derived}
    assert ops == {"square", "product"}
    assert len(set(t.names())) == 9


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


def test_scenario_spec_validation():
    with pytest.raises(SchemaError):
        ScenarioSpec(missingness=Missingness.COMPLETE, impute=ChainedEquations())
    with pytest.raises(SchemaError):
        ScenarioSpec(missingness=Missingness.PCT15)
    with pytest.raises(SchemaError):
        ScenarioSpec(missingness=Missingness.COMPLETE, methods=("svm",))
    with pytest.raises(SchemaError):
        ScenarioSpec(missingness=Missingness.COMPLETE, m=0)
    with pytest.raises(SchemaError):
        ScenarioSpec(missingness=Missingness.COMPLETE, pi_grid=(1.5,))


def test_scenario_spec_method_overrides():
    override = RfSelect(n_trees_first=100, n_trees_rest=50)
    spec = ScenarioSpec(
        missingness=Missingness.COMPLETE, method_params=(("rf", override),)
    )
    assert spec.spec_for("rf") is override
    assert isinstance(spec.spec_for("lasso"), LassoSelect)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def tiny_complete():
    spec = ScenarioSpec(
        missingness=Missingness.COMPLETE, methods=("lasso", "stepwise"), m=3
    )
    dgp = DgpSpec(n=150, n_noise_cont=5, n_noise_bin=5, seed=12)
    return spec, dgp


def test_complete_run_row_structure():
    spec, dgp = tiny_complete()
    res = run_scenarios(spec, dgp)
    assert len(res.metrics_rows) == 2
    for row in res.metrics_rows:
        assert set(row) == set(METRICS_COLUMNS)
        assert row["variant"] == "complete"
        assert row["pi"] == ""
        assert row["m_effective"] == 3
        assert 0.0 <= row["precision"] <= 1.0
        assert 0.0 <= row["recall"] <= 1.0
    assert len(res.power_rows) == 2 * N_USEFUL
    assert {r["variable"] for r in res.power_rows} == {
        f"x{i}" for i in range(1, N_USEFUL + 1)
    }
    assert len(res.frequency_rows) == 2 * 20
    assert res.failures == ()


def test_runner_is_thread_invariant():
    spec, dgp = tiny_complete()
    assert run_scenarios(spec, dgp) == run_scenarios(spec, dgp, n_threads=2)


def test_missing_run_consolidation_rows():
    spec = ScenarioSpec(
        missingness=Missingness.PCT30,
        impute=ChainedEquations(iterations=2),
        methods=("lasso",),
        m=2,
        b=6,
        pi_grid=(0.2, 0.6),
    )
    dgp = DgpSpec(n=120, n_noise_cont=3, n_noise_bin=3, seed=13)
    res = run_scenarios(spec, dgp)
    variants = [(r["variant"], r["pi"]) for r in res.metrics_rows]
    assert variants == [("bi", 0.2), ("bi", 0.6), ("cc", "")]
    lo, hi = res.metrics_rows[0], res.metrics_rows[1]
    assert lo["recall"] >= hi["recall"]  # stricter threshold keeps fewer variables
    bi_freq = [r for r in res.frequency_rows if r["variant"] == "bi"]
    assert len(bi_freq) == 16
    assert all(0.0 <= r["frequency"] <= 1.0 for r in bi_freq)


def test_write_table_formats_rows(tmp_path):
    rows = (
        {"method": "lasso", "variant": "bi", "pi": 0.4, "precision": 0.5},
        {"method": "rf", "variant": "cc", "pi": "", "precision": 1.0},
    )
    path = tmp_path / "t.csv"
    write_table(path, rows, ("method", "variant", "pi", "precision"))
    assert path.read_text() == (
        "method,variant,pi,precision\n"
        "lasso,bi,0.4,0.5\n"
        "rf,cc,,1.0\n"
    )
    assert METRICS_COLUMNS[:3] == ("method", "variant", "pi")
    assert POWER_COLUMNS[-1] == "power"
    assert FREQUENCY_COLUMNS[-1] == "frequency"
