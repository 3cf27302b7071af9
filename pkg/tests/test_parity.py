import pytest
from hypothesis import given
from hypothesis import strategies as st

from uqaudit.errors import ValidationError
from uqaudit.parity import (
    DIFFERENCE, DISCRIMINATION, PARITY, PARITY_METRICS, RATIO, REVERSE, UNDEFINED, MetricsTable,
    classify_disparity, compose_parity, diff_metric, ratio_metric,
)

METRIC_KIND = {name: kind for name, _, kind in PARITY_METRICS}
rates = st.floats(0.01, 1.0)


def table(cells):
    t = MetricsTable()
    for (metric, subgroup), value in cells.items():
        t.set(metric, subgroup, value)
    return t


def test_disparate_impact_and_spd():
    t = table({("positive_rate", "sex_dis"): 0.3, ("positive_rate", "sex_priv"): 0.6})
    report = compose_parity(t, ["sex"])
    assert report.get("disparate_impact", "sex").value == pytest.approx(0.5)
    assert report.get("statistical_parity_difference", "sex").value == pytest.approx(-0.3)
    assert report.get("disparate_impact", "sex").classification == DISCRIMINATION


def test_jitter_parity():
    t = table({("jitter", "race_dis"): 0.25, ("jitter", "race_priv"): 0.1})
    entry = compose_parity(t, ["race"]).get("jitter_parity", "race")
    assert entry.value == pytest.approx(0.15) and entry.classification == DISCRIMINATION


def test_only_present_bases_are_composed():
    t = table({("std", "g_dis"): 0.1, ("std", "g_priv"): 0.1})
    assert [e.metric for e in compose_parity(t, ["g"])] == ["std_parity"]


def test_missing_cell_noted():
    t = table({("accuracy", "sex_dis"): 0.8})
    entry = compose_parity(t, ["sex"]).get("accuracy_parity", "sex")
    assert entry.value is None and entry.classification == UNDEFINED
    assert "sex_priv" in entry.note


def test_zero_privileged_rate():
    t = table({("positive_rate", "g_dis"): 0.2, ("positive_rate", "g_priv"): 0.0})
    entry = compose_parity(t, ["g"]).get("disparate_impact", "g")
    assert entry.classification == UNDEFINED and "zero" in entry.note


@pytest.mark.parametrize("metric,value,favorable,expected", [
    ("statistical_parity_difference", -0.2, True, DISCRIMINATION),
    ("statistical_parity_difference", 0.2, True, REVERSE),
    ("statistical_parity_difference", 0.2, False, DISCRIMINATION),
    ("disparate_impact", 0.7, True, DISCRIMINATION),
    ("disparate_impact", 1.3, False, DISCRIMINATION),
    ("accuracy_parity", 0.1, True, REVERSE),
    ("accuracy_parity", 0.1, False, REVERSE),
    ("accuracy_parity", -0.1, False, DISCRIMINATION),
    ("equalized_odds_fpr", 0.1, True, DISCRIMINATION),
    ("equalized_odds_fpr", 0.1, False, DISCRIMINATION),
    ("equalized_odds_tpr", 0.1, True, REVERSE),
    ("label_stability_ratio", 1.2, True, REVERSE),
    ("label_stability_ratio", 0.8, True, DISCRIMINATION),
    ("std_parity", 0.1, False, DISCRIMINATION),
    ("iqr_parity", -0.1, True, REVERSE),
    ("jitter_parity", 0.04, True, PARITY),
    ("disparate_impact", 1.05, True, PARITY),
    ("std_parity", None, True, UNDEFINED),
])
def test_classification(metric, value, favorable, expected):
    assert classify_disparity(metric, value, METRIC_KIND[metric], favorable) == expected


def test_tolerance_must_be_positive():
    with pytest.raises(ValidationError):
        classify_disparity("std_parity", 0.1, DIFFERENCE, tolerance=0)


def test_unknown_metric():
    with pytest.raises(ValidationError):
        classify_disparity("nope", 0.5, DIFFERENCE)


@given(rates)
def test_fixed_points(v):
    assert diff_metric(v, v) == 0.0 and ratio_metric(v, v) == 1.0


@given(rates, rates)
def test_swapping_groups(a, b):
    assert diff_metric(a, b) == -diff_metric(b, a)
    assert ratio_metric(a, b) * ratio_metric(b, a) == pytest.approx(1.0)


@given(st.sampled_from([m for m, _, _ in PARITY_METRICS]), st.one_of(st.none(), st.floats(-3, 3)),
       st.booleans(), st.floats(0.001, 0.5))
def test_trichotomy(metric, value, favorable, tol):
    kind = METRIC_KIND[metric]
    label = classify_disparity(metric, value, kind, favorable, tol)
    if value is None:
        assert label == UNDEFINED
        return
    neutral = 1.0 if kind == RATIO else 0.0
    assert (label == PARITY) == (abs(value - neutral) <= tol + 1e-12)
    if label != PARITY:
        mirrored = classify_disparity(metric, 2 * neutral - value, kind, favorable, tol)
        assert {label, mirrored} == {DISCRIMINATION, REVERSE}


def test_table_round_trip_and_rename():
    t = table({("tpr", "a_dis"): 0.5, ("tpr", "a_priv"): None})
    assert MetricsTable.from_rows(t.rows()) == t
    assert t.renamed({"a_dis": "b_dis"}).get("tpr", "b_dis") == 0.5
