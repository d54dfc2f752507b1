"""Correlation-based relevance filtering and redundancy pruning."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

log = logging.getLogger(__name__)

TARGETS = ("gain", "state")
# |r| values within this distance of tau still count as reaching it, so that
# exact duplicates survive floating-point round-off at tau = 1.0
_TAU_SLACK = 1e-12


class UndefinedCorrelationError(ValueError):
    pass


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson expects two 1-D sequences of equal length")
    if x.size < 2:
        raise UndefinedCorrelationError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def _abs_corr_matrix(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise |r| between columns; constant columns get 0 everywhere."""
    dx = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", dx, dx)
    constant = ss == 0
    norm = np.sqrt(np.where(constant, 1.0, ss))
    z = dx / norm
    r = np.abs(z.T @ z)
    r[constant, :] = 0.0
    r[:, constant] = 0.0
    np.fill_diagonal(r, 0.0)
    return np.minimum(r, 1.0), constant


@dataclass
class RelevanceTable:
    """Per-feature Pearson correlation with knowledge gain and knowledge state."""

    names: tuple[str, ...]
    corr_gain: np.ndarray
    corr_state: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.corr_gain = np.asarray(self.corr_gain, dtype=float)
        self.corr_state = np.asarray(self.corr_state, dtype=float)

    def target(self, target: str) -> np.ndarray:
        if target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
        return self.corr_gain if target == "gain" else self.corr_state

    def lookup(self, name: str, target: str) -> float:
        return float(self.target(target)[self.names.index(name)])

    @classmethod
    def from_data(cls, X, names: Sequence[str], gain=None, state=None) -> "RelevanceTable":
        """Correlate every column of ``X`` with the continuous targets.

        Constant columns (or a missing target) get a correlation of 0.
        """
        X = np.asarray(X, dtype=float)
        cols = []
        for y in (gain, state):
            if y is None:
                cols.append(np.zeros(X.shape[1]))
                continue
            out = np.zeros(X.shape[1])
            for j in range(X.shape[1]):
                try:
                    out[j] = pearson(X[:, j], y)
                except UndefinedCorrelationError:
                    out[j] = 0.0
            cols.append(out)
        return cls(tuple(names), cols[0], cols[1])

    @classmethod
    def read_csv(cls, path) -> "RelevanceTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            tuple(r["feature"] for r in rows),
            [float(r["corr_gain"]) for r in rows],
            [float(r["corr_state"]) for r in rows],
        )

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "corr_gain", "corr_state"])
        for n, g, s in zip(self.names, self.corr_gain, self.corr_state):
            w.writerow([n, repr(float(g)), repr(float(s))])


@dataclass(frozen=True)
class FeatureSubset:
    names: tuple[str, ...]
    target: str
    threshold: float
    tau: float = 1.0
    dropped: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self):
        return len(self.names)


def relevance_filter(table: RelevanceTable, target: str, threshold: float) -> FeatureSubset:
    """Keep features whose |correlation| with the target reaches ``threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    corr = table.target(target)
    keep = tuple(n for n, c in zip(table.names, corr) if abs(c) >= threshold)
    return FeatureSubset(keep, target, threshold)


def redundancy_prune(X, columns: Sequence[str], subset: FeatureSubset, tau: float,
                     table: RelevanceTable, target: str) -> FeatureSubset:
    """Greedily drop the less relevant member of highly inter-correlated pairs.

    At each step the pair with the largest |r| >= ``tau`` is resolved (ties go
    to the pair that comes first in canonical order); the member with the
    smaller |corr_target| is removed, the later one on a tie. Stops when no
    remaining pair reaches ``tau``.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    columns = list(columns)
    names = [n for n in columns if n in set(subset.names)]
    missing = set(subset.names) - set(names)
    if missing:
        raise ValueError(f"subset features absent from matrix: {sorted(missing)}")
    X = np.asarray(X, dtype=float)[:, [columns.index(n) for n in names]]
    r, constant = _abs_corr_matrix(X)
    for n in np.asarray(names)[constant]:
        log.warning("feature %s is constant; excluded from redundancy pruning", n)
    relevance = np.array([abs(table.lookup(n, target)) for n in names])
    alive = np.ones(len(names), dtype=bool)
    dropped = []
    while alive.sum() > 1:
        sub = np.where(np.outer(alive, alive), r, -1.0)
        sub = np.triu(sub, k=1) + np.tril(np.full_like(sub, -1.0))
        best = sub.max()
        if best < tau - _TAU_SLACK:
            break
        # first pair in row-major (canonical) order among the maxima
        i, j = np.argwhere(sub == best)[0]
        loser = j if relevance[i] >= relevance[j] else i
        alive[loser] = False
        dropped.append(names[loser])
    kept = tuple(n for n, a in zip(names, alive) if a)
    return FeatureSubset(kept, target, subset.threshold, tau, tuple(dropped))


def select_features(X, columns: Sequence[str], target_values, target: str,
                    threshold: float, tau: float = 1.0,
                    table: RelevanceTable | None = None) -> FeatureSubset:
    """Relevance filter followed by redundancy pruning, computed on ``X``."""
    if table is None:
        kw = {"gain": target_values} if target == "gain" else {"state": target_values}
        table = RelevanceTable.from_data(X, columns, **kw)
    subset = relevance_filter(table, target, threshold)
    return redundancy_prune(X, columns, subset, tau, table, target)


class CorrelationSelector(TransformerMixin, BaseEstimator):
    """Column selector fitted on continuous knowledge targets.

    ``fit(X, y)`` takes ``y`` as the continuous gain or state score (not the
    class label); the retained columns are exposed as ``support_`` and
    ``selected_names_``.
    """

    def __init__(self, target="gain", threshold=0.0, tau=1.0, feature_names=None):
        self.target = target
        self.threshold = threshold
        self.tau = tau
        self.feature_names = feature_names

    def fit(self, X, y):
        X = check_array(X)
        names = (tuple(self.feature_names) if self.feature_names is not None
                 else tuple(f"x{i}" for i in range(X.shape[1])))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match X")
        self.subset_ = select_features(X, names, np.asarray(y, dtype=float),
                                       self.target, self.threshold, self.tau)
        self.selected_names_ = self.subset_.names
        self.support_ = np.array([n in set(self.subset_.names) for n in names])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_array(X)
        return X[:, self.support_]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "support_")
        return np.array(self.selected_names_, dtype=object)
