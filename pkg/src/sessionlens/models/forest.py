import math

import numpy as np

from .._rng import mix64
from . import _tree
from ._base import BaseClassifier


class RandomForest(BaseClassifier):
    """Bagged CART trees with Gini splits and per-split feature subsampling.

    Each tree is grown on a bootstrap sample until nodes are pure or would
    produce a leaf smaller than ``min_leaf``; ``max_features="sqrt"`` draws
    ``ceil(sqrt(d))`` candidate features per split. Prediction is a majority
    vote of the per-tree leaf majorities. The out-of-bag rows of tree ``t``
    are ``oob_indices_[t]``.
    """

    def __init__(self, n_trees=100, min_leaf=1, max_features="sqrt", random_state=0):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.random_state = random_state

    def _n_candidates(self, d):
        mf = self.max_features
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        if mf is None or mf == "all":
            return d
        if isinstance(mf, float):
            return max(1, min(d, math.ceil(mf * d)))
        return max(1, min(d, int(mf)))

    def _fit(self, X, codes):
        X = np.ascontiguousarray(X)
        n, d = X.shape
        k = self.classes_.size
        mf = self._n_candidates(d)
        self.trees_ = []
        self.oob_indices_ = []
        for t in range(self.n_trees):
            child = mix64(self.random_state, t)
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, size=n)
            tree = _tree.grow_tree(X, codes.astype(np.int64), idx, k, mf, self.min_leaf,
                                   np.uint64(mix64(child, 0)))
            self.trees_.append(tree)
            in_bag = np.zeros(n, dtype=bool)
            in_bag[idx] = True
            self.oob_indices_.append(np.flatnonzero(~in_bag))
        self._votes = [_tree.leaf_votes(tree[4]) for tree in self.trees_]

    def tree_predict_codes(self, t, X):
        """Class codes predicted by tree ``t`` alone."""
        feature, threshold, left, right, _ = self.trees_[t]
        leaves = _tree.apply_tree(np.ascontiguousarray(X, dtype=np.float64), feature, threshold, left, right)
        return self._votes[t][leaves]

    def _scores(self, X):
        X = np.ascontiguousarray(X)
        votes = np.zeros((X.shape[0], self.classes_.size))
        rows = np.arange(X.shape[0])
        for t in range(len(self.trees_)):
            np.add.at(votes, (rows, self.tree_predict_codes(t, X)), 1.0)
        return votes

    def oob_score(self, X, y):
        """Accuracy of out-of-bag majority votes on the training data."""
        X = self._validate_predict(X)
        codes = np.searchsorted(self.classes_, np.asarray(y))
        votes = np.zeros((X.shape[0], self.classes_.size))
        for t, oob in enumerate(self.oob_indices_):
            if oob.size:
                np.add.at(votes, (oob, self.tree_predict_codes(t, X[oob])), 1.0)
        voted = votes.sum(axis=1) > 0
        return float(np.mean(np.argmax(votes[voted], axis=1) == codes[voted]))

    def _get_state(self):
        return {
            "trees": [{"feature": f.tolist(), "threshold": th.tolist(), "left": lf.tolist(),
                       "right": rt.tolist(), "counts": c.tolist()} for f, th, lf, rt, c in self.trees_],
            "oob_indices": [o.tolist() for o in self.oob_indices_],
        }

    def _set_state(self, state):
        self.trees_ = [
            (np.array(t["feature"], dtype=np.int64), np.array(t["threshold"], dtype=np.float64),
             np.array(t["left"], dtype=np.int64), np.array(t["right"], dtype=np.int64),
             np.array(t["counts"], dtype=np.float64).reshape(len(t["feature"]), -1))
            for t in state["trees"]
        ]
        self.oob_indices_ = [np.array(o, dtype=np.int64) for o in state["oob_indices"]]
        self._votes = [_tree.leaf_votes(tree[4]) for tree in self.trees_]
