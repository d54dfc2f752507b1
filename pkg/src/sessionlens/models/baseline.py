"""Linear domain-knowledge regression used as the knowledge-state baseline."""
import numpy as np

from ..knowledge import CLASSES, bin_class, standardize
from ._base import BaseClassifier

INTERCEPT = -1.466
W_SAVED = 0.039
W_QUERY_LEN = 0.147
W_REL_MEAN = 0.130


def ks_zhang_score(saved, q_len, rel_mean):
    """Fixed regression score from documents saved, mean query length and mean clicked rank."""
    return INTERCEPT + W_SAVED * saved + W_QUERY_LEN * q_len + W_REL_MEAN * rel_mean


def ks_zhang_classify(scores):
    """z-standardize a list of scores and bin each into Low/Moderate/High."""
    return [bin_class(z) for z in standardize(scores)]


class KSZhangBaseline(BaseClassifier):
    """Three-class wrapper around :func:`ks_zhang_score`.

    ``X`` holds two columns, mean query length and mean clicked rank (a third
    column, if present, is the saved-document count; otherwise 0). ``fit``
    learns nothing from the labels beyond the score mean and SD of the
    training rows, which are used to z-score held-out rows before binning.
    The label set is fixed to codes 0/1/2 (Low/Moderate/High).
    """

    def __init__(self):
        pass

    def _raw_scores(self, X):
        saved = X[:, 2] if X.shape[1] > 2 else 0.0
        return ks_zhang_score(saved, X[:, 0], X[:, 1])

    def fit(self, X, y):
        X, _ = self._validate_fit(X, y)
        if X.shape[1] not in (2, 3):
            raise ValueError("baseline expects columns (q_len, rel_mean[, saved])")
        self.classes_ = np.arange(len(CLASSES))
        s = self._raw_scores(X)
        self.score_mean_ = float(s.mean())
        self.score_sd_ = float(s.std(ddof=1)) if s.size > 1 else 0.0
        return self

    def _scores(self, X):
        s = self._raw_scores(X)
        z = (s - self.score_mean_) / self.score_sd_ if self.score_sd_ > 0 else np.zeros_like(s)
        out = np.zeros((X.shape[0], len(CLASSES)))
        out[np.arange(X.shape[0]), [CLASSES.index(bin_class(v)) for v in z]] = 1.0
        return out

    def _get_state(self):
        return {"score_mean": self.score_mean_, "score_sd": self.score_sd_}

    def _set_state(self, state):
        self.score_mean_ = state["score_mean"]
        self.score_sd_ = state["score_sd"]
