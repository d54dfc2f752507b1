"""Shared input validation and standardization for the classifiers."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class Standardizer:
    """Column means and standard deviations taken from training rows only."""

    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)

    @classmethod
    def fit(cls, X):
        scale = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(scale > 0, scale, 1.0))

    def transform(self, X):
        return (X - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["scale"])


class BaseClassifier(ClassifierMixin, BaseEstimator):
    """fit/predict skeleton; subclasses implement ``_fit`` and ``_scores``.

    Labels are mapped to codes ``0..K-1`` over ``classes_``; ``predict``
    returns the class with the highest score, ties going to the earlier class.
    """

    requires_two_classes = False

    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, ensure_all_finite=True)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if self.requires_two_classes and self.classes_.size < 2:
            raise ValueError(f"{type(self).__name__} needs at least two classes in the training data")
        self.n_features_in_ = X.shape[1]
        return X, codes

    def _validate_predict(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def fit(self, X, y):
        X, codes = self._validate_fit(X, y)
        self._fit(X, codes)
        return self

    def decision_function(self, X):
        return self._scores(self._validate_predict(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    # serialization hooks
    def _get_state(self) -> dict:
        raise NotImplementedError

    def _set_state(self, state: dict) -> None:
        raise NotImplementedError
