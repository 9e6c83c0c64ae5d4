"""Multivariate amputation: controlled MAR missingness for complete data.

Rows are split among missingness patterns by an iid multinomial draw. Within
a pattern's subset, each row receives a weighted sum score over base columns,
derived columns, and the outcome; scores are standardized within the subset
and pushed through a shifted logistic link whose shift is calibrated by
bisection so the mean masking probability hits the requested fraction. Rows
drawn missing have all of the pattern's amputed columns masked jointly.

MAR is enforced structurally: a pattern may not place weight on any column it
amputes, nor on derived columns computed from one, nor on the outcome when
the outcome is amputed.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import ColumnKind, DataMatrix, RngHandle, TransformSpec, DerivedColumn
from .errors import CalibrationError, SchemaError


class Tail(enum.Enum):
    """Which score range attracts missingness."""

    RIGHT = "right"  # high scores more likely missing
    BOTH = "both"  # scores far from the median more likely missing


@dataclass(frozen=True)
class Pattern:
    """One missingness pattern: what to mask and how the score is built."""

    amputed: frozenset
    w1: dict = field(default_factory=dict)  # base-column weights
    w2: dict = field(default_factory=dict)  # derived-column weights
    w3: float = 0.0  # outcome weight
    tail: Tail = Tail.RIGHT
    within_pattern_missing_frac: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "amputed", frozenset(self.amputed))
        if not self.amputed:
            raise SchemaError("pattern must ampute at least one column")
        if not (0.0 < self.within_pattern_missing_frac < 1.0):
            raise SchemaError("within_pattern_missing_frac must lie in (0, 1)")


@dataclass(frozen=True)
class AmputationPlan:
    patterns: tuple
    proportions: tuple
    rng: Optional[RngHandle] = None

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        props = tuple(float(p) for p in self.proportions)
        object.__setattr__(self, "proportions", props)
        if len(self.patterns) != len(props):
            raise SchemaError("one proportion per pattern required")
        if not self.patterns:
            raise SchemaError("plan needs at least one pattern")
        if any(p < 0 for p in props):
            raise SchemaError("proportions must be nonnegative")
        if abs(sum(props) - 1.0) > 1e-9:
            raise SchemaError(f"proportions must sum to 1 (got {sum(props)!r})")


def _validate_pattern(d: DataMatrix, t: TransformSpec, p: Pattern):
    known = set(d.names) | {d.outcome}
    for name in p.amputed:
        if name not in known:
            raise SchemaError(f"amputed column {name!r} not present in the data")
    for name in p.w1:
        if name not in d.names:
            raise SchemaError(f"w1 names an unknown column {name!r}")
    derived_names = set(t.names())
    for name in p.w2:
        if name not in derived_names:
            raise SchemaError(f"w2 names an unknown derived column {name!r}")
    # MAR construction: no weight on anything the pattern masks
    amputed_cols = p.amputed - {d.outcome}
    for name, w in p.w1.items():
        if w != 0.0 and name in amputed_cols:
            raise SchemaError(
                f"pattern amputes {name!r} but gives it weight {w}; "
                "weights of amputed columns must be exactly 0"
            )
    inputs_of = {dc.name: set(dc.inputs) for dc in t.derived}
    for name, w in p.w2.items():
        if w != 0.0 and (inputs_of[name] & amputed_cols):
            raise SchemaError(
                f"derived column {name!r} is built from an amputed column; "
                "its weight must be exactly 0"
            )
    if d.outcome in p.amputed and p.w3 != 0.0:
        raise SchemaError(
            "pattern amputes the outcome but gives it nonzero weight w3"
        )


@dataclass(frozen=True)
class WssScores:
    scores: np.ndarray  # standardized within the subset
    mcar: bool  # True when raw scores had no variance (uniform masking)


def weighted_sum_scores(d: DataMatrix, t: TransformSpec, p: Pattern) -> WssScores:
    """Standardized weighted sum score per row of the (complete) subset."""
    if not d.is_complete():
        raise SchemaError("weighted sum scores require fully observed rows")
    _validate_pattern(d, t, p)
    raw = np.zeros(d.n)
    for name, w in p.w1.items():
        if w != 0.0:
            raw += w * d.col(name)
    if p.w2:
        q, _ = t.evaluate(d)
        pos = {name: j for j, name in enumerate(t.names())}
        for name, w in p.w2.items():
            if w != 0.0:
                raw += w * q[:, pos[name]]
    if p.w3 != 0.0:
        raw += p.w3 * d.y
    sd = float(raw.std())
    if sd == 0.0:
        return WssScores(scores=np.zeros(d.n), mcar=True)
    return WssScores(scores=(raw - raw.mean()) / sd, mcar=False)


def missingness_probs(scores: np.ndarray, tail: Tail, target: float) -> np.ndarray:
    """Per-row masking probabilities with mean calibrated to ``target``.

    Right-tailed: p_i = logistic(c + s_i). Both-tailed: p_i =
    logistic(c + |s_i - median(s)|). The shift c is found by bisection so
    that mean(p) matches the target within 1e-6.
    """
    if not (0.001 < target < 0.999):
        raise CalibrationError("target missing fraction must lie in (0.001, 0.999)")
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise CalibrationError("scores must be finite")
    g = np.abs(s - np.median(s)) if tail is Tail.BOTH else s

    def mean_prob(c):
        return float(expit(c + g).mean())

    span = float(np.max(np.abs(g))) if g.size else 0.0
    lo, hi = -40.0 - span, 40.0 + span
    f_lo, f_hi = mean_prob(lo), mean_prob(hi)
    if not (f_lo <= target <= f_hi):
        raise CalibrationError(
            f"cannot calibrate to {target}; achievable range [{f_lo:.6f}, {f_hi:.6f}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = mean_prob(mid)
        if abs(f_mid - target) <= 1e-6:
            return expit(mid + g)
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"bisection failed to reach {target}; best mean {mean_prob(0.5 * (lo + hi)):.8f}"
    )


def ampute(
    d: DataMatrix,
    t: TransformSpec,
    plan: AmputationPlan,
    rng=None,
) -> DataMatrix:
    """Apply the plan to fully observed data; returns a masked copy."""
    if not d.is_complete():
        raise SchemaError("amputation input must be fully observed")
    for p in plan.patterns:
        _validate_pattern(d, t, p)
    handle = rng if isinstance(rng, RngHandle) else plan.rng
    if handle is None:
        handle = RngHandle(0 if rng is None else int(rng))
    assign = handle.split(0).generator().choice(
        len(plan.patterns), size=d.n, p=np.asarray(plan.proportions)
    )
    x_mask = d.x_mask.copy()
    y_mask = d.y_mask.copy()
    for i, p in enumerate(plan.patterns):
        rows = np.flatnonzero(assign == i)
        if rows.size == 0:
            warnings.warn(
                f"pattern {i} received no rows and was skipped", RuntimeWarning
            )
            continue
        sub = d.take(rows)
        wss = weighted_sum_scores(sub, t, p)
        probs = missingness_probs(wss.scores, p.tail, p.within_pattern_missing_frac)
        hit = rows[handle.split(i + 1).generator().random(rows.size) < probs]
        for name in p.amputed:
            if name == d.outcome:
                y_mask[hit] = True
            else:
                x_mask[hit, d.col_index(name)] = True
    return d.with_values(d.x, d.y, x_mask=x_mask, y_mask=y_mask)


# ---------------------------------------------------------------------------
# config round trip
# ---------------------------------------------------------------------------


def plan_to_config(plan: AmputationPlan, transforms: TransformSpec = None) -> dict:
    obj = {
        "patterns": [
            {
                "amputed": sorted(p.amputed),
                "w1": dict(p.w1),
                "w2": dict(p.w2),
                "w3": p.w3,
                "tail": p.tail.value,
                "within_pattern_missing_frac": p.within_pattern_missing_frac,
            }
            for p in plan.patterns
        ],
        "proportions": list(plan.proportions),
    }
    if transforms is not None and transforms.derived:
        obj["transforms"] = [
            {"name": c.name, "op": c.op, "inputs": list(c.inputs)}
            for c in transforms.derived
        ]
    return obj


def plan_from_config(obj: dict) -> tuple:
    """Returns (plan, transforms) parsed from a config mapping."""
    try:
        patterns = tuple(
            Pattern(
                amputed=frozenset(p["amputed"]),
                w1={str(k): float(v) for k, v in p.get("w1", {}).items()},
                w2={str(k): float(v) for k, v in p.get("w2", {}).items()},
                w3=float(p.get("w3", 0.0)),
                tail=Tail(p.get("tail", "right")),
                within_pattern_missing_frac=float(p["within_pattern_missing_frac"]),
            )
            for p in obj["patterns"]
        )
        plan = AmputationPlan(patterns=patterns, proportions=tuple(obj["proportions"]))
        transforms = TransformSpec(
            derived=tuple(
                DerivedColumn(name=c["name"], op=c["op"], inputs=tuple(c["inputs"]))
                for c in obj.get("transforms", [])
            )
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid amputation config: {exc}") from exc
    return plan, transforms


def save_plan(path, plan: AmputationPlan, transforms: TransformSpec = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_config(plan, transforms), fh, indent=2)
        fh.write("\n")


def load_plan(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid amputation config {path}: {exc}") from exc
    return plan_from_config(obj)
