"""Repeated stratified cross-validation, metrics, grid search and MDA importance."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from ._rng import mix64
from .knowledge import CLASSES
from .models import ModelSpec, make_estimator
from .selection import FeatureSubset, RelevanceTable, redundancy_prune, relevance_filter, select_features

log = logging.getLogger(__name__)

N_CLASSES = len(CLASSES)
BASELINE_COLUMNS = ("q_term_avg", "SERP_click_rank_avg")


def default_n_jobs() -> int:
    try:
        return max(1, int(os.environ.get("SESSIONLENS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class Dataset:
    """Feature rows, class codes (0=Low, 1=Moderate, 2=High) and the continuous target."""

    X: np.ndarray
    y: np.ndarray
    columns: tuple[str, ...]
    target: np.ndarray | None = None
    keys: list | None = None
    target_name: str = "gain"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.columns = tuple(self.columns)
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=float)
        if self.X.shape != (self.y.size, len(self.columns)):
            raise ValueError("X, y and columns disagree in shape")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise ValueError("class codes must lie in {0, 1, 2}")

    def __len__(self):
        return self.y.size

    def subset_columns(self, names: Sequence[str]) -> "Dataset":
        idx = [self.columns.index(n) for n in names]
        return Dataset(self.X[:, idx], self.y, tuple(names), self.target, self.keys, self.target_name)


def build_dataset(matrix, labels: Sequence[dict], target: str = "gain") -> Dataset:
    """Join a feature matrix with label rows on ``(user_id, topic_id)``.

    ``labels`` are rows as produced by :func:`knowledge.read_labels_csv`;
    ``target="gain"`` uses the gain score and class, ``"state"`` the
    post-test score and state class. Matrix rows without a label are dropped.
    """
    if target not in ("gain", "state"):
        raise ValueError("target must be 'gain' or 'state'")
    by_key = {(str(r["user_id"]), str(r["topic_id"])): r for r in labels}
    rows, y, t, keys = [], [], [], []
    for i, key in enumerate(matrix.keys):
        row = by_key.get((str(key[0]), str(key[1])))
        if row is None:
            continue
        rows.append(i)
        keys.append(key)
        if target == "gain":
            y.append(CLASSES.index(row["gain_class"]))
            t.append(float(row["gain"]))
        else:
            y.append(CLASSES.index(row["state_class"]))
            t.append(float(row["post"]))
    if not rows:
        raise ValueError("no feature rows matched a label")
    return Dataset(matrix.values[rows], y, matrix.columns, t, keys, target)


# -- folds ----------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[np.ndarray, ...]
    repetition: int
    seed: int

    def splits(self):
        all_idx = np.concatenate(self.folds) if self.folds else np.array([], dtype=np.int64)
        for test in self.folds:
            yield np.setdiff1d(all_idx, test), test


def stratified_kfold(y, k: int, seed: int, repetition: int = 0) -> FoldPlan:
    """Shuffle each class, then deal its rows round-robin over the ``k`` folds.

    The dealing position carries over from one class to the next so fold
    sizes stay balanced as well as per-class counts.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > y.size:
        raise ValueError(f"k={k} exceeds the number of rows ({y.size})")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        for i in members:
            buckets[pos % k].append(int(i))
            pos += 1
    return FoldPlan(tuple(np.array(sorted(b), dtype=np.int64) for b in buckets), repetition, seed)


# -- metrics --------------------------------------------------------------

@dataclass
class Metrics:
    confusion: list[list[int]]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float

    @classmethod
    def from_confusion(cls, confusion) -> "Metrics":
        cm = np.asarray(confusion, dtype=np.int64)
        tp = np.diag(cm).astype(float)
        pred_tot = cm.sum(axis=0)
        true_tot = cm.sum(axis=1)
        p = np.divide(tp, pred_tot, out=np.zeros(N_CLASSES), where=pred_tot > 0)
        r = np.divide(tp, true_tot, out=np.zeros(N_CLASSES), where=true_tot > 0)
        f = np.divide(2 * p * r, p + r, out=np.zeros(N_CLASSES), where=(p + r) > 0)
        total = cm.sum()
        return cls(
            confusion=cm.tolist(),
            precision=p.tolist(),
            recall=r.tolist(),
            f1=f.tolist(),
            macro_precision=float(sum(p.tolist()) / N_CLASSES),
            macro_recall=float(sum(r.tolist()) / N_CLASSES),
            macro_f1=float(sum(f.tolist()) / N_CLASSES),
            accuracy=float(np.trace(cm) / total) if total else 0.0,
        )


def confusion_matrix(predictions, truth) -> np.ndarray:
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return cm


def metrics(predictions, truth) -> Metrics:
    """Per-class and macro P/R/F1 plus accuracy; rows of the confusion are truth."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape or truth.size < 1:
        raise ValueError("predictions and truth must be equal-length and non-empty")
    return Metrics.from_confusion(confusion_matrix(predictions, truth))


# -- repeated cross-validation --------------------------------------------

@dataclass(frozen=True)
class SelectionConfig:
    target: str = "gain"
    threshold: float = 0.0
    tau: float = 1.0
    scope: str = "fold"  # "fold": selection refit on training rows; "global": on all rows

    def __post_init__(self):
        if self.scope not in ("fold", "global"):
            raise ValueError("selection scope must be 'fold' or 'global'")


@dataclass
class EvalReport:
    method: str
    hyperparameters: dict
    seed: int
    target: str
    tau: float | None
    threshold: float | None
    selection_scope: str | None
    n_features: int
    n_features_fold_mean: float
    k: int
    reps: int
    metrics: Metrics
    fold_accuracy_mean: float
    fold_macro_f1_mean: float
    n_predictions: int
    skipped_folds: int
    runtime_ms: float
    fold_subsets: list | None = field(default=None, repr=False)

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = asdict(self)
        d.pop("fold_subsets")
        if not include_runtime:
            d.pop("runtime_ms")
        return d

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    def csv_row(self) -> list:
        m = self.metrics
        label = ModelSpec(self.method, self.hyperparameters).label() if self.hyperparameters else self.method
        row = [label, _fmt(self.tau), _fmt(self.threshold), self.n_features, f"{self.runtime_ms:.1f}"]
        for c in range(N_CLASSES):
            row += [f"{m.precision[c]:.3f}", f"{m.recall[c]:.3f}", f"{m.f1[c]:.3f}"]
        row += [f"{m.macro_precision:.3f}", f"{m.macro_recall:.3f}", f"{m.macro_f1:.3f}", f"{m.accuracy:.3f}"]
        return row


def _fmt(v):
    return "-" if v is None else f"{v:g}"


def report_csv_header(target: str = "gain") -> list[str]:
    thr = "beta" if target == "gain" else "gamma"
    cols = ["Method", "tau", thr, "#Features", "Runtime_ms"]
    for c in (*CLASSES, "Macro"):
        cols += [f"{c}_P", f"{c}_R", f"{c}_F1"]
    return cols + ["Accu"]


def write_reports_csv(reports: Sequence[EvalReport], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(report_csv_header(reports[0].target if reports else "gain"))
    for r in reports:
        w.writerow(r.csv_row())


def _select(ds: Dataset, rows, config: SelectionConfig) -> FeatureSubset:
    if ds.target is None:
        raise ValueError("feature selection needs the continuous target values")
    return select_features(ds.X[rows], ds.columns, ds.target[rows], config.target,
                           config.threshold, config.tau)


def _run_fold(ds: Dataset, spec: ModelSpec, train, test, subset, fold_seed):
    names = subset.names if subset is not None else ds.columns
    if not names:
        return None, "no features selected"
    idx = [ds.columns.index(n) for n in names]
    model = make_estimator(ModelSpec(spec.kind, spec.hyperparameters, fold_seed))
    if getattr(model, "requires_two_classes", False) and np.unique(ds.y[train]).size < 2:
        return None, "single class in training fold"
    model.fit(ds.X[np.ix_(train, idx)], ds.y[train])
    return model.predict(ds.X[np.ix_(test, idx)]), None


def repeated_cv(
    dataset: Dataset,
    spec: ModelSpec,
    selection: SelectionConfig | None = None,
    k: int = 10,
    reps: int = 10,
    seed: int = 0,
    n_jobs: int | None = None,
    keep_subsets: bool = False,
) -> EvalReport:
    """Repeated stratified k-fold evaluation with in-fold feature selection.

    Repetition ``r`` uses fold seed ``mix64(seed, r)``. Predictions from every
    fold and repetition are pooled into one confusion matrix; the mean of the
    per-fold accuracy and macro-F1 is reported alongside. ``runtime_ms`` covers
    the whole repeated run. ``selection=None`` uses every column as given
    (the baseline is always evaluated this way).
    """
    t0 = time.perf_counter()
    ds = dataset
    if spec.kind == "KS_Zhang":
        selection = None
    global_subset = None
    full_subset = None
    if selection is not None:
        full_subset = _select(ds, np.arange(len(ds)), selection)
        if selection.scope == "global":
            global_subset = full_subset

    cells = []
    for r in range(reps):
        rep_seed = mix64(seed, r)
        plan = stratified_kfold(ds.y, k, rep_seed, r)
        for f, (train, test) in enumerate(plan.splits()):
            cells.append((r, f, train, test, mix64(rep_seed, f)))

    def run(cell):
        r, f, train, test, fold_seed = cell
        if selection is None:
            subset = None
        elif global_subset is not None:
            subset = global_subset
        else:
            subset = _select(ds, train, selection)
        pred, why = _run_fold(ds, spec, train, test, subset, fold_seed)
        return pred, why, subset

    n_jobs = n_jobs or default_n_jobs()
    if n_jobs > 1:
        outputs = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(c) for c in cells)
    else:
        outputs = [run(c) for c in cells]

    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    fold_acc, fold_f1, n_feats, subsets = [], [], [], []
    skipped = 0
    for (r, f, train, test, _), (pred, why, subset) in zip(cells, outputs):
        subsets.append(subset)
        if pred is None:
            log.warning("repetition %d fold %d skipped: %s", r, f, why)
            skipped += 1
            continue
        fold_cm = confusion_matrix(pred, ds.y[test])
        cm += fold_cm
        fm = Metrics.from_confusion(fold_cm)
        fold_acc.append(fm.accuracy)
        fold_f1.append(fm.macro_f1)
        n_feats.append(len(subset) if subset is not None else len(ds.columns))

    return EvalReport(
        method=spec.kind,
        hyperparameters=dict(spec.hyperparameters),
        seed=seed,
        target=selection.target if selection else ds.target_name,
        tau=selection.tau if selection else None,
        threshold=selection.threshold if selection else None,
        selection_scope=selection.scope if selection else None,
        n_features=len(full_subset) if full_subset is not None else len(ds.columns),
        n_features_fold_mean=float(np.mean(n_feats)) if n_feats else 0.0,
        k=k,
        reps=reps,
        metrics=Metrics.from_confusion(cm),
        fold_accuracy_mean=float(np.mean(fold_acc)) if fold_acc else 0.0,
        fold_macro_f1_mean=float(np.mean(fold_f1)) if fold_f1 else 0.0,
        n_predictions=int(cm.sum()),
        skipped_folds=skipped,
        runtime_ms=(time.perf_counter() - t0) * 1000.0,
        fold_subsets=subsets if keep_subsets else None,
    )


# -- grid search ----------------------------------------------------------

def _grid_points(grid: dict) -> list[dict]:
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def grid_search(
    dataset: Dataset,
    kind: str,
    grid: dict | None = None,
    taus: Sequence[float] = (1.0,),
    thresholds: Sequence[float] = (0.0,),
    target: str = "gain",
    seed: int = 0,
    k: int = 10,
    reps: int = 10,
    scope: str = "fold",
    n_jobs: int | None = None,
) -> tuple[EvalReport, list[EvalReport]]:
    """Evaluate every (hyperparameters, tau, threshold) cell by repeated CV.

    The best report has the highest accuracy, then macro-F1, then comes first
    in canonical order (hyperparameter grid, then tau, then threshold, each in
    the order given).
    """
    from .models import DEFAULT_GRIDS

    grid = DEFAULT_GRIDS[kind] if grid is None else grid
    points = _grid_points(grid) or [{}]
    reports = []
    for hp in points:
        spec = ModelSpec(kind, hp, seed)
        if kind == "KS_Zhang":
            reports.append(repeated_cv(dataset, spec, None, k, reps, seed, n_jobs))
            continue
        for tau in taus:
            for thr in thresholds:
                cfg = SelectionConfig(target, thr, tau, scope)
                reports.append(repeated_cv(dataset, spec, cfg, k, reps, seed, n_jobs))
    if not reports:
        raise ValueError("empty grid")
    best = reports[0]
    for rep in reports[1:]:
        if (rep.metrics.accuracy, rep.metrics.macro_f1) > (best.metrics.accuracy, best.metrics.macro_f1):
            best = rep
    return best, reports


def selection_cells(table: RelevanceTable, target: str, taus: Sequence[float],
                    thresholds: Sequence[float], X=None, columns=None) -> dict:
    """Feature subset for every (tau, threshold) cell.

    Without a feature matrix, pruning cannot be evaluated: cells with
    ``tau < 1`` map to ``None`` and ``tau = 1`` cells report the relevance
    filter alone.
    """
    out = {}
    for tau in taus:
        for thr in thresholds:
            subset = relevance_filter(table, target, thr)
            if X is not None:
                subset = redundancy_prune(X, columns, subset, tau, table, target)
            elif tau < 1.0:
                subset = None
            out[(tau, thr)] = subset
    return out


# -- permutation importance -----------------------------------------------

@dataclass
class ImportanceReport:
    names: tuple[str, ...]
    mda: np.ndarray
    n_trees_used: int

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.names)), key=lambda i: (-self.mda[i], i))
        return [self.names[i] for i in order]

    def rank_of(self, name: str) -> int:
        return self.ranking.index(name) + 1

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mda", "rank"])
        for rank, name in enumerate(self.ranking, start=1):
            w.writerow([name, repr(float(self.mda[self.names.index(name)])), rank])


def mda_importance(dataset: Dataset, rf_spec: ModelSpec, seed: int) -> ImportanceReport:
    """Mean decrease in out-of-bag accuracy when a feature is permuted.

    For every tree, each feature column is shuffled within that tree's OOB
    rows (a fresh seeded permutation per tree and feature) and the tree's
    accuracy drop is recorded; MDA is the mean drop over trees with OOB rows.
    """
    if rf_spec.kind != "RF":
        raise ValueError("MDA importance requires a random forest spec")
    ds = dataset
    model = make_estimator(ModelSpec("RF", rf_spec.hyperparameters, seed)).fit(ds.X, ds.y)
    codes = np.searchsorted(model.classes_, ds.y)
    d = ds.X.shape[1]
    drops = np.zeros(d)
    used = 0
    for t, oob in enumerate(model.oob_indices_):
        if oob.size == 0:
            continue
        used += 1
        Xo = np.ascontiguousarray(ds.X[oob])
        base = np.mean(model.tree_predict_codes(t, Xo) == codes[oob])
        tree_seed = mix64(seed, t)
        for j in range(d):
            perm = np.random.default_rng(mix64(tree_seed, j)).permutation(oob.size)
            Xp = Xo.copy()
            Xp[:, j] = Xo[perm, j]
            drops[j] += base - np.mean(model.tree_predict_codes(t, Xp) == codes[oob])
    mda = drops / used if used else drops
    return ImportanceReport(ds.columns, mda, used)
