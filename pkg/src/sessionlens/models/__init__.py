"""Classifiers behind a common fit/predict contract, plus model documents."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .baseline import KSZhangBaseline, ks_zhang_classify, ks_zhang_score
from .forest import RandomForest
from .linear import LinearSVM, SoftmaxRegression
from .mlp import MLPClassifier
from .naive_bayes import GaussianNB

__all__ = [
    "GaussianNB", "SoftmaxRegression", "LinearSVM", "RandomForest", "MLPClassifier",
    "KSZhangBaseline", "ks_zhang_score", "ks_zhang_classify",
    "ModelSpec", "DEFAULT_GRIDS", "make_estimator", "fit", "predict", "predict_batch",
    "serialize", "deserialize", "MODEL_FORMAT_VERSION",
]

ESTIMATORS = {
    "NB": GaussianNB,
    "LR": SoftmaxRegression,
    "SVM": LinearSVM,
    "RF": RandomForest,
    "MP": MLPClassifier,
    "KS_Zhang": KSZhangBaseline,
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "NB": {"var_floor": [1e-9, 1e-6]},
    "LR": {"l2": [0.0, 0.01, 0.1], "n_iter": [500]},
    "SVM": {"C": [0.1, 1.0, 10.0], "n_epochs": [50]},
    "RF": {"n_trees": [100, 200], "min_leaf": [1, 5]},
    "MP": {"n_hidden": [8, 16], "learning_rate": [0.01, 0.1], "n_epochs": [200]},
    "KS_Zhang": {},
}

MODEL_FORMAT = "sessionlens-model"
MODEL_FORMAT_VERSION = 1


class ModelDocumentError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {sorted(ESTIMATORS)}")
        allowed = set(ESTIMATORS[self.kind]().get_params()) - {"random_state"}
        unknown = set(self.hyperparameters) - allowed
        if unknown:
            raise ValueError(f"{self.kind} does not accept hyperparameters {sorted(unknown)}")

    def label(self) -> str:
        params = ",".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.kind}({params})"


def make_estimator(spec: ModelSpec):
    est = ESTIMATORS[spec.kind](**spec.hyperparameters)
    if "random_state" in est.get_params():
        est.set_params(random_state=spec.seed)
    return est


def fit(spec: ModelSpec, X, y):
    return make_estimator(spec).fit(X, y)


def predict_batch(model, X) -> np.ndarray:
    return model.predict(X)


def predict(model, x):
    return predict_batch(model, np.asarray(x, dtype=float).reshape(1, -1))[0]


def _kind_of(model) -> str:
    for kind, cls in ESTIMATORS.items():
        if type(model) is cls:
            return kind
    raise ModelDocumentError(f"cannot serialize {type(model).__name__}")


def serialize(model, seed: int | None = None) -> str:
    """Versioned JSON document; floats are written with round-trip precision."""
    kind = _kind_of(model)
    params = model.get_params()
    seed = params.pop("random_state", seed)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "kind": kind,
        "hyperparameters": params,
        "seed": seed,
        "classes": model.classes_.tolist(),
        "n_features": int(model.n_features_in_),
        "parameters": model._get_state(),
    }
    return json.dumps(doc)


def deserialize(document: str):
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelDocumentError(f"malformed model document: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelDocumentError("not a sessionlens model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelDocumentError(f"unsupported model document version {doc.get('version')!r}")
    try:
        hyper = dict(doc["hyperparameters"])
        spec = ModelSpec(doc["kind"], hyper, doc["seed"] if doc["seed"] is not None else 0)
        model = make_estimator(spec)
        model.classes_ = np.array(doc["classes"])
        model.n_features_in_ = doc["n_features"]
        model._set_state(doc["parameters"])
    except (KeyError, TypeError) as exc:
        raise ModelDocumentError(f"malformed model document: {exc!r}") from None
    return model
