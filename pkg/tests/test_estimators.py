import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uqaudit.data import REGRESSION
from uqaudit.errors import ValidationError
from uqaudit.estimators import (
    DECISION_TREE, KNN, LOGISTIC_REGRESSION, FittedModel, ModelSpec, _Logistic, fit, fit_count,
    logistic_loss_and_grad, predict_label, predict_proba,
)

LR = ModelSpec(LOGISTIC_REGRESSION)


def test_logistic_separable_reaches_full_accuracy():
    X = np.array([[0.0], [1.0], [9.0], [10.0]])
    y = np.array([0, 0, 1, 1])
    # brute-force oracle: some threshold separates the classes
    assert any(all((x > t) == bool(label) for x, label in zip(X[:, 0], y)) for t in np.arange(0, 10, 0.5))
    model = fit(ModelSpec(LOGISTIC_REGRESSION, hyperparameters={"iterations": 3000}), X, y)
    assert np.mean(predict_label(predict_proba(model, X)) == y) == 1.0


def test_zero_weight_logistic_is_half():
    model = FittedModel(LR, _Logistic(np.zeros(3), 0.0), 3)
    np.testing.assert_array_equal(predict_proba(model, np.random.default_rng(0).normal(size=(4, 3))), 0.5)


def test_depth_zero_tree_predicts_majority():
    X = np.arange(5.0)[:, None]
    y = np.array([1, 0, 1, 1, 0])
    model = fit(ModelSpec(DECISION_TREE, hyperparameters={"max_depth": 0}), X, y)
    np.testing.assert_array_equal(predict_label(predict_proba(model, X)), 1)


def test_tree_leaf_fraction():
    model = fit(ModelSpec(DECISION_TREE, hyperparameters={"max_depth": 0}), np.zeros((4, 1)), [0, 0, 0, 1])
    assert predict_proba(model, np.zeros((1, 1)))[0] == 0.25


def test_tree_finds_obvious_split():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    model = fit(ModelSpec(DECISION_TREE), X, [0, 0, 1, 1])
    np.testing.assert_array_equal(predict_proba(model, X), [0, 0, 1, 1])
    assert model.params.threshold[0] == 1.5


def test_tree_tie_goes_to_lowest_feature():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    model = fit(ModelSpec(DECISION_TREE, hyperparameters={"max_depth": 1}), X, [0, 0, 1, 1])
    assert model.params.feature[0] == 0


def test_tree_respects_min_leaf_size():
    X = np.arange(6.0)[:, None]
    model = fit(ModelSpec(DECISION_TREE, hyperparameters={"min_leaf_size": 3}), X, [0, 1, 1, 1, 1, 1])
    tree = model.params
    leaves = tree.feature < 0
    assert np.all(tree.value[leaves] >= 0)
    # the only admissible split is 3 | 3
    assert tree.threshold[0] == 2.5


def test_regression_tree_splits_on_variance():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0]])
    y = np.array([1.0, 1.0, 1.0, 5.0, 5.0])
    model = fit(ModelSpec(DECISION_TREE, REGRESSION, {"max_depth": 1}), X, y)
    np.testing.assert_allclose(predict_proba(model, X), y)


def test_knn_one_neighbour_reproduces_training_labels():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 3))
    y = rng.integers(0, 2, 30)
    model = fit(ModelSpec(KNN, hyperparameters={"k": 1}), X, y)
    np.testing.assert_array_equal(predict_proba(model, X), y)


def test_knn_fraction_of_positive_neighbours():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    model = fit(ModelSpec(KNN, hyperparameters={"k": 3}), X, [1, 1, 0, 0])
    assert predict_proba(model, np.array([[1.0]]))[0] == pytest.approx(2 / 3)


def test_knn_distance_ties_take_lowest_index():
    X = np.array([[-1.0], [1.0]])
    model = fit(ModelSpec(KNN, hyperparameters={"k": 1}), X, [0, 1])
    assert predict_proba(model, np.array([[0.0]]))[0] == 0.0


def test_knn_regression_mean():
    X = np.array([[0.0], [1.0], [5.0]])
    model = fit(ModelSpec(KNN, REGRESSION, {"k": 2}), X, [2.0, 4.0, 100.0])
    assert predict_proba(model, np.array([[0.4]]))[0] == 3.0


@pytest.mark.parametrize("value,label", [(0.7, 1), (0.5, 1), (0.49999, 0)])
def test_threshold(value, label):
    assert predict_label([value])[0] == label


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_raising_threshold_never_adds_positives(p, t1, t2):
    lo, hi = sorted((t1, t2))
    assert np.all(predict_label(p, hi) <= predict_label(p, lo))


@pytest.mark.parametrize("seed", range(5))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 3))
    y = rng.integers(0, 2, 10).astype(float)
    w, b, l2 = rng.normal(size=3), float(rng.normal()), 0.1
    _, gw, gb = logistic_loss_and_grad(w, b, X, y, l2)
    h = 1e-6
    numeric = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        numeric.append((logistic_loss_and_grad(w + e, b, X, y, l2)[0]
                        - logistic_loss_and_grad(w - e, b, X, y, l2)[0]) / (2 * h))
    numeric_b = (logistic_loss_and_grad(w, b + h, X, y, l2)[0]
                 - logistic_loss_and_grad(w, b - h, X, y, l2)[0]) / (2 * h)
    analytic = np.append(gw, gb)
    numeric = np.append(numeric, numeric_b)
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
    assert np.all(rel < 1e-5)


@pytest.mark.parametrize("kind", [LOGISTIC_REGRESSION, DECISION_TREE, KNN])
def test_fit_is_deterministic(kind):
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(40, 4)), rng.integers(0, 2, 40)
    probe = rng.normal(size=(15, 4))
    a, b = fit(ModelSpec(kind), X, y, seed=3), fit(ModelSpec(kind), X, y, seed=3)
    np.testing.assert_array_equal(predict_proba(a, probe), predict_proba(b, probe))
    assert a.fingerprint == b.fingerprint
    out = predict_proba(a, probe)
    assert np.all((out >= 0) & (out <= 1))
    np.testing.assert_array_equal(out, predict_proba(a, probe))


def test_fit_counter_counts_every_fit():
    before = fit_count()
    for _ in range(3):
        fit(ModelSpec(KNN, hyperparameters={"k": 1}), np.zeros((2, 1)), [0, 1])
    assert fit_count() - before == 3


class TestErrors:
    def test_k_larger_than_training_set(self):
        with pytest.raises(ValidationError, match="exceeds"):
            fit(ModelSpec(KNN, hyperparameters={"k": 5}), np.zeros((3, 1)), [0, 1, 0])

    def test_non_finite_features(self):
        with pytest.raises(ValidationError, match="non-finite"):
            fit(LR, np.array([[np.nan]]), [0])

    def test_width_mismatch(self):
        model = fit(LR, np.zeros((2, 2)), [0, 1])
        with pytest.raises(ValidationError, match="expects 2"):
            predict_proba(model, np.zeros((1, 3)))

    def test_classification_targets(self):
        with pytest.raises(ValidationError):
            fit(LR, np.zeros((2, 1)), [0, 2])

    def test_unknown_hyperparameter(self):
        with pytest.raises(ValidationError, match="depth"):
            ModelSpec(KNN, hyperparameters={"depth": 3})

    def test_logistic_regression_is_classification_only(self):
        with pytest.raises(ValidationError):
            ModelSpec(LOGISTIC_REGRESSION, REGRESSION)
