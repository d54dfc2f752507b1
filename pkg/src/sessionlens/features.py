"""The 70 behavioural session features used for knowledge prediction.

Column order follows the feature table exactly: Session (2), Query (18),
SERP (12), Browsing (30), Mouse (8). Statistics that are undefined for a
session (no clicks, no browsed pages, a single click interval, queries with
only out-of-vocabulary terms) fall back to 0 so every vector stays dense.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._text import DEFAULT_IDLE_WINDOW_S, active_time, tokenize  # noqa: F401  (re-exported)
from .session_log import Session

SESSION_FEATURES = ("s_duration", "s_duration_per_q")
QUERY_FEATURES = (
    "q_num",
    "q_term_max", "q_term_min", "q_term_avg", "q_term_total",
    "q_uniq_term_max", "q_uniq_term_min", "q_uniq_term_avg", "q_uniq_term_total",
    "q_uniq_term_ratio",
    "q_len_first", "q_len_last",
    "q_uniq_term_first", "q_uniq_term_last",
    "q_complexity_max", "q_complexity_min", "q_complexity_avg",
    "q_complexity_max_diff",
)
SERP_FEATURES = (
    "SERP_click",
    "SERP_click_rank_highest", "SERP_click_rank_lowest", "SERP_click_rank_avg",
    "SERP_click_interval",
    "SERP_click_per_query",
    "SERP_no_click_query_num", "SERP_no_click_query_pct",
    "SERP_time_total", "SERP_time_avg", "SERP_time_max",
    "SERP_avg_time_to_first_click",
)
BROWSING_FEATURES = (
    "b_num", "b_uniq_num", "b_num_per_q", "b_uniq_num_per_q",
    "b_time_total", "b_time_avg_per_q", "b_time_max_per_page", "b_time_avg_per_page",
    "b_revisited_ratio",
    "b_num_from_SERP", "b_pct_from_SERP", "b_num_from_non_SERP", "b_pct_from_non_SERP",
    "b_distinct_domain_num",
    "b_ttl_len_max", "b_ttl_len_min", "b_ttl_len_avg", "b_ttl_len_total",
    "b_page_size_max", "b_page_size_min", "b_page_size_avg", "b_page_size_total",
    "b_ttl_q_overlap_max", "b_ttl_q_overlap_min", "b_ttl_q_overlap_avg", "b_ttl_q_overlap_total",
    "b_url_q_overlap_max", "b_url_q_overlap_min", "b_url_q_overlap_avg", "b_url_q_overlap_total",
)
MOUSE_FEATURES = (
    "m_num", "m_num_per_q", "m_rank_max", "m_rank_max_per_q",
    "m_scroll_dist", "m_scroll_dist_per_q", "m_scroll_max_pos", "m_scroll_max_pos_per_q",
)
FEATURE_NAMES: tuple[str, ...] = (
    SESSION_FEATURES + QUERY_FEATURES + SERP_FEATURES + BROWSING_FEATURES + MOUSE_FEATURES
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 70


class FeatureExtractionError(ValueError):
    pass


class AoALexicon(Mapping):
    """Word -> age of acquisition (years), looked up case-insensitively."""

    def __init__(self, entries: Mapping[str, float] | None = None):
        self._aoa: dict[str, float] = {}
        for word, aoa in (entries or {}).items():
            aoa = float(aoa)
            if not aoa > 0:
                raise ValueError(f"age of acquisition for {word!r} must be positive")
            for tok in tokenize(word) or [word.lower()]:
                self._aoa[tok] = aoa

    @classmethod
    def from_csv(cls, path) -> "AoALexicon":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"word", "aoa"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected header 'word,aoa'")
            entries = {}
            for row in reader:
                if row["aoa"] in ("", "NA", None):
                    continue
                entries[row["word"]] = float(row["aoa"])
        return cls(entries)

    def __getitem__(self, word: str) -> float:
        return self._aoa[word.lower()]

    def __iter__(self):
        return iter(self._aoa)

    def __len__(self):
        return len(self._aoa)


def query_complexity(terms: Iterable[str], lexicon: Mapping[str, float]) -> float:
    """Largest age of acquisition among in-vocabulary terms (0 if none)."""
    known = [lexicon[t] for t in terms if t in lexicon]
    return max(known) if known else 0.0


def term_overlap(query_terms: set, target_terms: set) -> float:
    if not query_terms:
        raise FeatureExtractionError("query has no terms")
    return len(set(query_terms) & set(target_terms)) / len(query_terms)


def _stats(values: Sequence[float]) -> tuple[float, float, float, float]:
    """(max, min, avg, total) with zeros for an empty sequence."""
    if not values:
        return 0.0, 0.0, 0.0, 0.0
    total = float(sum(values))
    return float(max(values)), float(min(values)), total / len(values), total


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


def extract(session: Session, lexicon: Mapping[str, float]) -> FeatureVector:
    queries = session.queries
    n_q = len(queries)
    if n_q == 0:
        raise FeatureExtractionError(f"session {session.session_id!r} has no queries")
    f: dict[str, float] = {}

    f["s_duration"] = session.duration_s
    f["s_duration_per_q"] = f["s_duration"] / n_q

    # -- query
    lens = [len(q.terms) for q in queries]
    uniq = [len(q.unique_terms) for q in queries]
    all_uniq = set().union(*(q.unique_terms for q in queries))
    f["q_num"] = n_q
    f["q_term_max"], f["q_term_min"], f["q_term_avg"], f["q_term_total"] = _stats(lens)
    f["q_uniq_term_max"], f["q_uniq_term_min"], f["q_uniq_term_avg"], _ = _stats(uniq)
    f["q_uniq_term_total"] = len(all_uniq)
    f["q_uniq_term_ratio"] = f["q_uniq_term_total"] / f["q_term_total"]
    f["q_len_first"], f["q_len_last"] = lens[0], lens[-1]
    f["q_uniq_term_first"], f["q_uniq_term_last"] = uniq[0], uniq[-1]
    cx = [query_complexity(q.terms, lexicon) for q in queries]
    f["q_complexity_max"], f["q_complexity_min"], f["q_complexity_avg"], _ = _stats(cx)
    f["q_complexity_max_diff"] = f["q_complexity_max"] - f["q_complexity_min"]

    # -- SERP
    clicks = [e for e in session.events if e.kind == "serp_click"]
    renders = [e for e in session.events if e.kind == "serp_render"]
    ranks = [e.payload["rank"] for e in clicks]
    f["SERP_click"] = len(clicks)
    f["SERP_click_rank_highest"] = float(min(ranks)) if ranks else 0.0
    f["SERP_click_rank_lowest"] = float(max(ranks)) if ranks else 0.0
    f["SERP_click_rank_avg"] = _safe_div(sum(ranks), len(ranks))
    # mean gap between consecutive clicks; the sum of gaps telescopes
    span_ms = clicks[-1].timestamp - clicks[0].timestamp if clicks else 0
    f["SERP_click_interval"] = span_ms / 1000.0 / (len(clicks) - 1) if len(clicks) > 1 else 0.0
    f["SERP_click_per_query"] = len(clicks) / n_q
    first_click: dict[int, int] = {}
    for e in clicks:
        first_click.setdefault(session.query_index_at(e.timestamp), e.timestamp)
    first_render: dict[int, int] = {}
    for e in renders:
        first_render.setdefault(session.query_index_at(e.timestamp), e.timestamp)
    no_click = sum(1 for q in queries if q.index not in first_click)
    f["SERP_no_click_query_num"] = no_click
    f["SERP_no_click_query_pct"] = no_click / n_q
    serp_per_q = [0.0] * n_q
    for v in session.page_visits:
        if v.is_serp:
            serp_per_q[v.associated_query_index] += v.dwell_s
    f["SERP_time_total"] = sum(serp_per_q)
    f["SERP_time_avg"] = f["SERP_time_total"] / n_q
    f["SERP_time_max"] = max(serp_per_q)
    waits = [(first_click[i] - first_render[i]) / 1000.0
             for i in sorted(first_click) if i in first_render and first_render[i] <= first_click[i]]
    f["SERP_avg_time_to_first_click"] = _safe_div(sum(waits), len(waits))

    # -- browsing
    pages = [v for v in session.page_visits if not v.is_serp]
    b_num = len(pages)
    b_uniq = len({v.url for v in pages})
    f["b_num"], f["b_uniq_num"] = b_num, b_uniq
    f["b_num_per_q"], f["b_uniq_num_per_q"] = b_num / n_q, b_uniq / n_q
    active = [v.active_s for v in pages]
    f["b_time_total"] = float(sum(active))
    f["b_time_avg_per_q"] = f["b_time_total"] / n_q
    f["b_time_max_per_page"] = max(active) if active else 0.0
    f["b_time_avg_per_page"] = _safe_div(f["b_time_total"], b_num)
    f["b_revisited_ratio"] = _safe_div(b_num - b_uniq, b_num)
    from_serp = sum(1 for v in pages if v.from_serp)
    f["b_num_from_SERP"] = from_serp
    f["b_pct_from_SERP"] = _safe_div(from_serp, b_num)
    f["b_num_from_non_SERP"] = b_num - from_serp
    f["b_pct_from_non_SERP"] = _safe_div(b_num - from_serp, b_num)
    f["b_distinct_domain_num"] = len({v.domain for v in pages})
    (f["b_ttl_len_max"], f["b_ttl_len_min"],
     f["b_ttl_len_avg"], f["b_ttl_len_total"]) = _stats([len(v.title) for v in pages])
    (f["b_page_size_max"], f["b_page_size_min"],
     f["b_page_size_avg"], f["b_page_size_total"]) = _stats([v.size_bytes for v in pages])
    ttl_ov = [term_overlap(queries[v.associated_query_index].unique_terms, set(tokenize(v.title)))
              for v in pages]
    url_ov = [term_overlap(queries[v.associated_query_index].unique_terms, set(tokenize(v.url)))
              for v in pages]
    (f["b_ttl_q_overlap_max"], f["b_ttl_q_overlap_min"],
     f["b_ttl_q_overlap_avg"], f["b_ttl_q_overlap_total"]) = _stats(ttl_ov)
    (f["b_url_q_overlap_max"], f["b_url_q_overlap_min"],
     f["b_url_q_overlap_avg"], f["b_url_q_overlap_total"]) = _stats(url_ov)

    # -- mouse
    hover_max = [0] * n_q
    scroll_max = [0] * n_q
    n_hover = 0
    scroll_dist = 0
    for e in session.events:
        if e.kind == "mouseover":
            n_hover += 1
            i = session.query_index_at(e.timestamp)
            hover_max[i] = max(hover_max[i], e.payload["rank"])
        elif e.kind == "scroll":
            scroll_dist += abs(e.payload["delta_px"])
            i = session.query_index_at(e.timestamp)
            scroll_max[i] = max(scroll_max[i], e.payload["position_px"])
    f["m_num"] = n_hover
    f["m_num_per_q"] = n_hover / n_q
    f["m_rank_max"] = max(hover_max)
    f["m_rank_max_per_q"] = sum(hover_max) / n_q
    f["m_scroll_dist"] = scroll_dist
    f["m_scroll_dist_per_q"] = scroll_dist / n_q
    f["m_scroll_max_pos"] = max(scroll_max)
    f["m_scroll_max_pos_per_q"] = sum(scroll_max) / n_q

    values = np.array([float(f[name]) for name in FEATURE_NAMES])
    if not np.all(np.isfinite(values)):
        bad = [n for n, v in zip(FEATURE_NAMES, values) if not math.isfinite(v)]
        raise FeatureExtractionError(f"session {session.session_id!r}: non-finite {bad}")
    return FeatureVector(values)


def _csv_number(v) -> str:
    # whole numbers print without a fraction; others use the shortest exact repr
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


@dataclass
class FeatureMatrix:
    """Sessions x features table keyed by ``(user_id, topic_id)``."""

    values: np.ndarray
    keys: list[tuple[str, str]]
    columns: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.keys), len(self.columns))
        self.columns = tuple(self.columns)

    def __len__(self):
        return len(self.keys)

    @property
    def shape(self):
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        idx = [self.columns.index(c) for c in columns]
        return FeatureMatrix(self.values[:, idx], list(self.keys), tuple(columns))

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(self.values[rows], [self.keys[i] for i in rows], self.columns)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "topic_id", *self.columns])
        for (user, topic), row in zip(self.keys, self.values):
            w.writerow([user, topic, *(_csv_number(v) for v in row)])

    @classmethod
    def read_csv(cls, path) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["user_id", "topic_id"]:
                raise ValueError(f"{path}: first columns must be user_id,topic_id")
            keys, rows = [], []
            for rec in reader:
                keys.append((rec[0], rec[1]))
                rows.append([float(v) for v in rec[2:]])
        return cls(np.array(rows, dtype=float).reshape(len(keys), len(header) - 2), keys, tuple(header[2:]))


def extract_matrix(sessions: Iterable[Session], lexicon: Mapping[str, float]) -> FeatureMatrix:
    """One row per session, rows ordered by ``(topic_id, user_id)``."""
    ordered = sorted(sessions, key=lambda s: (s.topic_id, s.user_id, s.session_id))
    rows = []
    for s in ordered:
        try:
            rows.append(extract(s, lexicon).values)
        except FeatureExtractionError as exc:
            raise FeatureExtractionError(f"session {s.session_id!r}: {exc}") from None
    values = np.vstack(rows) if rows else np.empty((0, N_FEATURES))
    return FeatureMatrix(values, [(s.user_id, s.topic_id) for s in ordered])


class SessionFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping assembled sessions to the feature matrix."""

    def __init__(self, lexicon=None):
        self.lexicon = lexicon

    def fit(self, sessions=None, y=None):
        return self

    def transform(self, sessions) -> np.ndarray:
        lexicon = self.lexicon if self.lexicon is not None else {}
        rows = [extract(s, lexicon).values for s in sessions]
        return np.vstack(rows) if rows else np.empty((0, N_FEATURES))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)
