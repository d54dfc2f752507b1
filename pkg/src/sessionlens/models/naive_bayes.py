import numpy as np

from ._base import BaseClassifier


class GaussianNB(BaseClassifier):
    """Gaussian class-conditional densities with add-one smoothed priors."""

    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def _fit(self, X, codes):
        k = self.classes_.size
        counts = np.bincount(codes, minlength=k).astype(float)
        self.class_log_prior_ = np.log((counts + 1.0) / (counts.sum() + k))
        self.theta_ = np.vstack([X[codes == c].mean(axis=0) for c in range(k)])
        var = np.vstack([X[codes == c].var(axis=0) for c in range(k)])
        self.var_ = np.maximum(var, self.var_floor)

    def _scores(self, X):
        # joint log-likelihood, one column per class
        ll = -0.5 * (np.log(2.0 * np.pi * self.var_).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.theta_[None]) ** 2) / self.var_[None]).sum(axis=2))
        return ll + self.class_log_prior_

    def _get_state(self):
        return {"class_log_prior": self.class_log_prior_.tolist(),
                "theta": self.theta_.tolist(), "var": self.var_.tolist()}

    def _set_state(self, state):
        self.class_log_prior_ = np.array(state["class_log_prior"], dtype=float)
        self.theta_ = np.array(state["theta"], dtype=float)
        self.var_ = np.array(state["var"], dtype=float)
