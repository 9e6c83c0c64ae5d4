"""Score-driven masking: calibration, pattern targeting, config round trip."""

import numpy as np
import pytest

from bivsel import (
    AmputationPlan,
    CalibrationError,
    ColumnKind,
    DataMatrix,
    Missingness,
    Pattern,
    RngHandle,
    SchemaError,
    Tail,
    TransformSpec,
    ampute,
    build_scenario_plan,
    missingness_probs,
    weighted_sum_scores,
)
from bivsel.ampute import load_plan, plan_from_config, plan_to_config, save_plan
from bivsel.sim import DgpSpec, generate, scenario_transforms


def flat_data(n=400, seed=0):
    gen = RngHandle(seed).generator()
    x = np.column_stack([gen.normal(size=n), gen.normal(size=n),
                         (gen.random(n) < 0.5).astype(float)])
    y = (gen.random(n) < 0.5).astype(float)
    return DataMatrix(
        names=("a", "b", "g"),
        kinds=(ColumnKind.CONTINUOUS, ColumnKind.CONTINUOUS, ColumnKind.BINARY),
        x=x,
        y=y,
    )


# ---------------------------------------------------------------------------
# masking probabilities
# ---------------------------------------------------------------------------


def test_probability_calibration_hits_target():
    gen = RngHandle(1).generator()
    scores = gen.normal(size=1000)
    for target in (0.1, 0.3, 0.6):
        for tail in (Tail.RIGHT, Tail.BOTH):
            p = missingness_probs(scores, tail, target)
            assert abs(p.mean() - target) <= 2e-6
            assert ((0 < p) & (p < 1)).all()


def test_right_tail_is_monotone_in_score():
    scores = np.linspace(-2, 2, 101)
    p = missingness_probs(scores, Tail.RIGHT, 0.3)
    assert (np.diff(p) > 0).all()


def test_both_tails_peak_away_from_median():
    scores = np.linspace(-2, 2, 101)
    p = missingness_probs(scores, Tail.BOTH, 0.3)
    med = np.argmin(np.abs(scores - np.median(scores)))
    assert p[0] > p[med] and p[-1] > p[med]
    assert np.allclose(p, p[::-1])  # symmetric scores give symmetric risk


def test_probability_validation():
    scores = np.zeros(10)
    with pytest.raises(CalibrationError):
        missingness_probs(scores, Tail.RIGHT, 0.0001)
    with pytest.raises(CalibrationError):
        missingness_probs(np.array([np.inf, 0.0]), Tail.RIGHT, 0.3)


# ---------------------------------------------------------------------------
# weighted sum scores
# ---------------------------------------------------------------------------


def test_scores_are_standardized():
    d = flat_data()
    p = Pattern(amputed={"a"}, w1={"b": 1.0}, within_pattern_missing_frac=0.3)
    wss = weighted_sum_scores(d, TransformSpec(), p)
    assert not wss.mcar
    assert wss.scores.mean() == pytest.approx(0.0, abs=1e-12)
    assert wss.scores.std() == pytest.approx(1.0)
    expect = (d.col("b") - d.col("b").mean()) / d.col("b").std()
    assert np.allclose(wss.scores, expect)


def test_outcome_weight_enters_score():
    d = flat_data()
    p = Pattern(amputed={"a"}, w3=2.0, within_pattern_missing_frac=0.3)
    wss = weighted_sum_scores(d, TransformSpec(), p)
    raw = 2.0 * d.y
    assert np.allclose(wss.scores, (raw - raw.mean()) / raw.std())


def test_degenerate_score_flags_mcar():
    d = flat_data()
    p = Pattern(amputed={"a"}, w1={}, within_pattern_missing_frac=0.3)
    wss = weighted_sum_scores(d, TransformSpec(), p)
    assert wss.mcar
    assert (wss.scores == 0).all()


# ---------------------------------------------------------------------------
# amputation
# ---------------------------------------------------------------------------


def one_pattern_plan(frac=0.4):
    return AmputationPlan(
        patterns=(
            Pattern(amputed={"a"}, w1={"b": 1.0}, within_pattern_missing_frac=frac),
        ),
        proportions=(1.0,),
    )


def test_ampute_masks_only_planned_columns():
    d = flat_data()
    out = ampute(d, TransformSpec(), one_pattern_plan(), rng=RngHandle(5))
    assert out.x_mask[:, d.col_index("a")].any()
    assert not out.x_mask[:, d.col_index("b")].any()
    assert not out.x_mask[:, d.col_index("g")].any()
    assert not out.y_mask.any()
    assert d.is_complete()  # input untouched
    masked = out.x_mask[:, 0]
    assert abs(masked.mean() - 0.4) < 0.10
    assert np.isnan(out.x[masked, 0]).all()


def test_ampute_prefers_high_scores_on_right_tail():
    d = flat_data(n=2000, seed=6)
    out = ampute(d, TransformSpec(), one_pattern_plan(0.3), rng=RngHandle(7))
    masked = out.x_mask[:, 0]
    assert d.col("b")[masked].mean() > d.col("b")[~masked].mean() + 0.5


def test_ampute_is_deterministic():
    d = flat_data()
    a = ampute(d, TransformSpec(), one_pattern_plan(), rng=RngHandle(8))
    b = ampute(d, TransformSpec(), one_pattern_plan(), rng=RngHandle(8))
    c = ampute(d, TransformSpec(), one_pattern_plan(), rng=RngHandle(9))
    assert np.array_equal(a.x_mask, b.x_mask)
    assert not np.array_equal(a.x_mask, c.x_mask)


def test_ampute_can_mask_outcome():
    d = flat_data()
    plan = AmputationPlan(
        patterns=(
            Pattern(amputed={"y", "a"}, w1={"b": 1.0},
                    within_pattern_missing_frac=0.3),
        ),
        proportions=(1.0,),
    )
    out = ampute(d, TransformSpec(), plan, rng=RngHandle(10))
    assert out.y_mask.any()
    assert np.array_equal(out.y_mask, out.x_mask[:, 0])  # same hit rows


def test_ampute_requires_complete_input():
    d = flat_data()
    once = ampute(d, TransformSpec(), one_pattern_plan(), rng=RngHandle(11))
    with pytest.raises(SchemaError):
        ampute(once, TransformSpec(), one_pattern_plan(), rng=RngHandle(12))


def test_empty_pattern_warns_and_continues():
    d = flat_data(n=60)
    plan = AmputationPlan(
        patterns=(
            Pattern(amputed={"a"}, w1={"b": 1.0}, within_pattern_missing_frac=0.3),
            Pattern(amputed={"g"}, w1={"b": 1.0}, within_pattern_missing_frac=0.3),
        ),
        proportions=(1.0 - 1e-9, 1e-9),
    )
    with pytest.warns(RuntimeWarning):
        out = ampute(d, TransformSpec(), plan, rng=RngHandle(13))
    assert out.x_mask[:, 0].any()


def test_plan_validation():
    pat = Pattern(amputed={"a"}, within_pattern_missing_frac=0.3)
    with pytest.raises(SchemaError):
        AmputationPlan(patterns=(pat,), proportions=(0.5, 0.5))
    with pytest.raises(SchemaError):
        AmputationPlan(patterns=(pat,), proportions=(0.9,))
    with pytest.raises(SchemaError):
        Pattern(amputed=set(), within_pattern_missing_frac=0.3)
    with pytest.raises(SchemaError):
        Pattern(amputed={"a"}, within_pattern_missing_frac=1.0)


def test_pattern_referencing_unknown_column_fails():
    d = flat_data()
    plan = AmputationPlan(
        patterns=(
            Pattern(amputed={"zz"}, w1={"b": 1.0}, within_pattern_missing_frac=0.3),
        ),
        proportions=(1.0,),
    )
    with pytest.raises(SchemaError):
        ampute(d, TransformSpec(), plan, rng=RngHandle(14))


# ---------------------------------------------------------------------------
# benchmark plans and the config round trip
# ---------------------------------------------------------------------------


def test_benchmark_plan_structure():
    with pytest.raises(SchemaError):
        build_scenario_plan(Missingness.COMPLETE)
    for miss, frac in ((Missingness.PCT15, 0.15), (Missingness.PCT30, 0.30),
                       (Missingness.PCT60, 0.60)):
        plan = build_scenario_plan(miss)
        assert len(plan.patterns) == 8
        assert sum(plan.proportions) == pytest.approx(1.0)
        assert all(p.within_pattern_missing_frac == frac for p in plan.patterns)
        amputed_union = frozenset().union(*(p.amputed for p in plan.patterns))
        assert amputed_union == {"y", "x7", "x8", "x9", "x10"}
        assert plan.patterns[0].amputed == {"y"}
        assert all(p.tail is Tail.BOTH for p in plan.patterns[5:])
        assert all(p.tail is Tail.RIGHT for p in plan.patterns[:5])


def test_benchmark_missing_rates_one_seed():
    d, _ = generate(DgpSpec(n=4000, seed=77))
    out = ampute(d, scenario_transforms(), build_scenario_plan(Missingness.PCT30),
                 rng=RngHandle(78))
    row_hit = (out.x_mask.any(axis=1) | out.y_mask).mean()
    assert abs(row_hit - 0.30) < 0.03
    assert abs(out.y_mask.mean() - 0.15) < 0.03


def test_config_round_trip(tmp_path):
    plan = build_scenario_plan(Missingness.PCT15)
    transforms = scenario_transforms()
    cfg = plan_to_config(plan, transforms)
    back, t_back = plan_from_config(cfg)
    assert back.proportions == plan.proportions
    assert len(back.patterns) == len(plan.patterns)
    for p, q in zip(plan.patterns, back.patterns):
        assert (p.amputed, p.w1, p.w2, p.w3, p.tail) == (q.amputed, q.w1, q.w2, q.w3, q.tail)
    assert t_back.names() == transforms.names()

    path = tmp_path / "plan.json"
    save_plan(path, plan, transforms)
    loaded, t_loaded = load_plan(path)
    assert loaded.proportions == plan.proportions
    assert t_loaded.names() == transforms.names()


def test_config_rejects_malformed_input():
    with pytest.raises(SchemaError):
        plan_from_config({"proportions": [1.0]})
    with pytest.raises(SchemaError):
        plan_from_config({
            "patterns": [{"amputed": ["a"], "within_pattern_missing_frac": "wide"}],
            "proportions": [1.0],
        })
