import json

import numpy as np
import pytest

from sessionlens.models import (
    DEFAULT_GRIDS, GaussianNB, KSZhangBaseline, LinearSVM, MLPClassifier, ModelSpec, RandomForest,
    SoftmaxRegression, deserialize, fit, ks_zhang_classify, ks_zhang_score, make_estimator, predict,
    predict_batch, serialize,
)
from sessionlens.models import ModelDocumentError
from sessionlens.models.mlp import loss_and_grad
from sessionlens.synth import benchmark_dataset, planted_dataset


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 1.0], [0.0, 3.0, -1.0]])
    y = np.repeat([0, 1, 2], 30)
    X = centers[y] + rng.standard_normal((90, 3))
    return X, y


SEPARABLE_X = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
SEPARABLE_Y = np.array([0, 0, 0, 1, 1, 1])


# -- fit examples -----------------------------------------------------------

def test_rf_single_class_predicts_that_class():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((20, 4))
    model = RandomForest(n_trees=10).fit(X, np.full(20, 2))
    assert set(model.predict(rng.standard_normal((15, 4)))) == {2}


def test_nb_closed_form_example():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    model = GaussianNB().fit(X, [0, 0, 2, 2])
    assert predict(model, [0.05]) == 0
    assert predict(model, [10.05]) == 2


def test_lr_separable_training_accuracy():
    model = SoftmaxRegression().fit(SEPARABLE_X, SEPARABLE_Y)
    assert np.array_equal(model.predict(SEPARABLE_X), SEPARABLE_Y)


def test_lr_loss_monotone_and_gradient_small():
    model = SoftmaxRegression().fit(SEPARABLE_X, SEPARABLE_Y)
    assert len(model.loss_curve_) == 501
    assert np.all(np.diff(model.loss_curve_) <= 0.0)
    assert model.grad_norm_ < 1e-3


@pytest.mark.parametrize("l2", [0.0, 0.01, 0.1])
def test_lr_loss_monotone_on_overlapping_classes(blobs, l2):
    X, y = blobs
    model = SoftmaxRegression(l2=l2).fit(X, y)
    assert np.all(np.diff(model.loss_curve_) <= 0.0)


def test_lr_fixed_step_is_honoured(blobs):
    X, y = blobs
    model = SoftmaxRegression(step=0.05, n_iter=50).fit(X, y)
    assert np.all(np.diff(model.loss_curve_) <= 0.0)
    assert model.grad_norm_ > 1e-3


def test_svm_fits_blobs(blobs):
    X, y = blobs
    assert LinearSVM().fit(X, y).score(X, y) > 0.85


def test_mlp_fits_blobs(blobs):
    X, y = blobs
    model = MLPClassifier(n_hidden=8, n_epochs=100).fit(X, y)
    assert model.score(X, y) > 0.85
    assert model.loss_curve_[-1] < model.loss_curve_[0]


# -- numerical checks --------------------------------------------------------

def test_mlp_gradient_matches_central_differences():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5, 4))
    Y = np.eye(3)[[0, 1, 2, 1, 0]]
    params = [rng.standard_normal((4, 6)), rng.standard_normal(6),
              rng.standard_normal((6, 3)), rng.standard_normal(3)]
    _, grads = loss_and_grad(params, X, Y)
    h = 1e-5
    for p, g in zip(params, grads):
        numeric = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss_and_grad(params, X, Y)[0]
            p[idx] = orig - h
            down = loss_and_grad(params, X, Y)[0]
            p[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        rel = np.abs(numeric - g) / np.maximum(np.maximum(np.abs(numeric), np.abs(g)), 1e-8)
        assert rel.max() < 1e-4


def test_nb_invariant_under_positive_affine_maps(blobs):
    X, y = blobs
    rng = np.random.default_rng(11)
    test = rng.standard_normal((200, 3)) * 3
    a = np.array([2.5, 0.01, 40.0])
    b = np.array([-7.0, 3.0, 1e3])
    base = GaussianNB().fit(X, y).predict(test)
    moved = GaussianNB().fit(X * a + b, y).predict(test * a + b)
    assert np.array_equal(base, moved)


def test_rf_more_trees_do_not_hurt_oob_accuracy():
    ds = benchmark_dataset(seed=0)
    small = RandomForest(n_trees=50, random_state=0).fit(ds.X, ds.y).oob_score(ds.X, ds.y)
    large = RandomForest(n_trees=200, random_state=0).fit(ds.X, ds.y).oob_score(ds.X, ds.y)
    assert large >= small - 0.05


@pytest.mark.parametrize("kind", ["NB", "LR", "SVM", "RF", "MP"])
def test_determinism(kind, blobs):
    X, y = blobs
    spec = ModelSpec(kind, {}, seed=42)
    a, b = fit(spec, X, y), fit(spec, X, y)
    assert serialize(a) == serialize(b)
    assert np.array_equal(predict_batch(a, X), predict_batch(b, X))


def test_rf_seed_changes_trees(blobs):
    X, y = blobs
    a = fit(ModelSpec("RF", {"n_trees": 5}, seed=1), X, y)
    b = fit(ModelSpec("RF", {"n_trees": 5}, seed=2), X, y)
    assert serialize(a) != serialize(b)


def test_predict_ties_go_to_smaller_class():
    # two identical rows with different labels: NB scores tie exactly
    model = GaussianNB().fit(np.array([[1.0], [1.0]]), [2, 1])
    assert predict(model, [1.0]) == 1


# -- errors ------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["NB", "LR", "SVM", "RF", "MP"])
def test_rejects_empty_and_non_finite(kind):
    with pytest.raises(ValueError):
        make_estimator(ModelSpec(kind)).fit(np.empty((0, 2)), [])
    with pytest.raises(ValueError):
        make_estimator(ModelSpec(kind)).fit(np.array([[0.0, np.nan], [1.0, 2.0]]), [0, 1])


def test_width_mismatch_raises(blobs):
    X, y = blobs
    model = GaussianNB().fit(X, y)
    with pytest.raises(ValueError):
        model.predict(X[:, :2])


def test_model_spec_rejects_unknown_hyperparameter():
    with pytest.raises(ValueError, match="n_trees"):
        ModelSpec("NB", {"n_trees": 5})
    with pytest.raises(ValueError):
        ModelSpec("XGB")


@pytest.mark.parametrize("kind", sorted(DEFAULT_GRIDS))
def test_default_grids_are_valid_specs(kind):
    from itertools import product
    grid = DEFAULT_GRIDS[kind]
    for values in product(*grid.values()):
        ModelSpec(kind, dict(zip(grid, values)))


# -- KS baseline ---------------------------------------------------------------

def test_ks_zhang_intercept_exact():
    assert ks_zhang_score(0, 0, 0) == -1.466


def test_ks_zhang_formula_value():
    assert abs(ks_zhang_score(2, 4, 3) - (-0.410)) < 1e-12


def test_ks_zhang_deterministic():
    assert ks_zhang_score(0, 4.5, 2.25) == ks_zhang_score(0, 4.5, 2.25)


def test_ks_zhang_classify_examples():
    assert ks_zhang_classify([-1, 0, 1]) == ["Low", "Moderate", "High"]
    s = np.array([0.3, -1.2, 2.0, 0.1, 0.7])
    assert ks_zhang_classify(s) == ks_zhang_classify(3.0 * s + 11.0)


def test_ks_zhang_classify_rejects_constant_scores():
    with pytest.raises(ValueError):
        ks_zhang_classify([0.5, 0.5, 0.5])


def test_ks_baseline_wrapper_bins_held_out_scores():
    X = np.array([[1.0, 1.0], [4.0, 3.0], [8.0, 6.0], [4.0, 3.0]])
    model = KSZhangBaseline().fit(X, [0, 1, 2, 1])
    pred = model.predict(X)
    assert pred[0] == 0 and pred[2] == 2 and pred[1] == 1


# -- serialization -----------------------------------------------------------

@pytest.mark.parametrize("kind", ["NB", "LR", "RF", "SVM", "MP", "KS_Zhang"])
def test_serialize_round_trip_bit_identical(kind, blobs):
    X, y = blobs
    if kind == "KS_Zhang":
        X = np.abs(X[:, :2])
    model = fit(ModelSpec(kind, {"n_trees": 20} if kind == "RF" else {}, seed=5), X, y)
    restored = deserialize(serialize(model))
    probe = np.vstack([X, np.random.default_rng(0).standard_normal((50, X.shape[1])) * 4])
    assert np.array_equal(model.predict(probe), restored.predict(probe))
    assert np.array_equal(model.decision_function(probe), restored.decision_function(probe))


def test_deserialize_rejects_version_mismatch(blobs):
    X, y = blobs
    doc = json.loads(serialize(GaussianNB().fit(X, y)))
    doc["version"] = 99
    with pytest.raises(ModelDocumentError, match="version"):
        deserialize(json.dumps(doc))


@pytest.mark.parametrize("text", ["{not json", "[]", '{"format": "other"}',
                                  '{"format": "sessionlens-model", "version": 1, "kind": "NB"}'])
def test_deserialize_rejects_malformed(text):
    with pytest.raises(ModelDocumentError):
        deserialize(text)


def test_planted_dataset_is_learnable():
    ds = planted_dataset(300, {"q_num": "large"}, seed=1, noise_sd=0.0)
    model = RandomForest().fit(ds.X, ds.y)
    assert model.oob_score(ds.X, ds.y) >= 0.95
