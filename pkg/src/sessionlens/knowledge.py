"""Knowledge-test scoring, gain computation and Low/Moderate/High labelling."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

CLASSES = ("Low", "Moderate", "High")
ANSWERS = ("TRUE", "FALSE", "IDK")
_ANSWER_ALIASES = {"I DON'T KNOW": "IDK", "I DONT KNOW": "IDK", "YES": "TRUE", "NO": "FALSE"}


class KnowledgeError(ValueError):
    pass


class DegenerateDistributionError(KnowledgeError):
    """Raised when a set of values has no spread to standardize against."""


def _normalize_answer(value: str) -> str:
    v = str(value).strip().upper()
    v = _ANSWER_ALIASES.get(v, v)
    if v not in ANSWERS:
        raise KnowledgeError(f"unknown answer option {value!r}")
    return v


def _as_mapping(pairs, value_key: str) -> dict[str, str]:
    if isinstance(pairs, Mapping):
        return {str(k): _normalize_answer(v) for k, v in pairs.items()}
    out = {}
    for item in pairs:
        if isinstance(item, Mapping):
            out[str(item["item_id"])] = _normalize_answer(item[value_key])
        else:
            item_id, value = item
            out[str(item_id)] = _normalize_answer(value)
    return out


def score_test(answers, answer_key) -> float:
    """Fraction of key items answered correctly.

    ``IDK`` and unanswered items count as incorrect. Both arguments accept a
    mapping ``item_id -> option`` or a list of ``{"item_id", "answer"|"truth"}``
    records.
    """
    key = _as_mapping(answer_key, "truth")
    if not key:
        raise KnowledgeError("answer key is empty")
    given = _as_mapping(answers, "answer")
    unknown = set(given) - set(key)
    if unknown:
        raise KnowledgeError(f"answers reference items missing from the key: {sorted(unknown)}")
    correct = sum(1 for item, truth in key.items() if given.get(item) == truth)
    return correct / len(key)


def knowledge_gain(pre: float, post: float) -> float:
    for name, v in (("pre", pre), ("post", post)):
        if not 0.0 <= v <= 1.0:
            raise KnowledgeError(f"{name} score {v} outside [0, 1]")
    return post - pre


def standardize(values: Sequence[float]) -> np.ndarray:
    """z-scores using the sample (n-1) standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DegenerateDistributionError("need at least two values to standardize")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DegenerateDistributionError("values have zero variance")
    return (x - x.mean()) / sd


def bin_class(z: float) -> str:
    """Low below -0.5 SD, High above +0.5 SD, Moderate in between (inclusive)."""
    if not math.isfinite(z):
        raise KnowledgeError(f"non-finite z-score {z}")
    if z < -0.5:
        return "Low"
    if z > 0.5:
        return "High"
    return "Moderate"


def class_index(label: str) -> int:
    return CLASSES.index(label)


@dataclass(frozen=True)
class KnowledgeRecord:
    user_id: str
    topic_id: str
    pre_answers: dict | None = None
    post_answers: dict | None = None
    answer_key: dict | None = None
    pre_score: float | None = None
    post_score: float | None = None
    gain_class: str | None = None
    state_class: str | None = None

    def __post_init__(self):
        for name, kind in (("pre_answers", "answer"), ("post_answers", "answer"), ("answer_key", "truth")):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _as_mapping(value, kind))
        if self.answer_key is not None:
            if self.pre_score is None and self.pre_answers is not None:
                object.__setattr__(self, "pre_score", score_test(self.pre_answers, self.answer_key))
            if self.post_score is None and self.post_answers:
                object.__setattr__(self, "post_score", score_test(self.post_answers, self.answer_key))

    @property
    def gain(self) -> float | None:
        if self.pre_score is None or self.post_score is None:
            return None
        return knowledge_gain(self.pre_score, self.post_score)


def _cells(records, grouping: str) -> dict[str, list[int]]:
    if grouping not in ("per_topic", "global"):
        raise KnowledgeError(f"unknown grouping {grouping!r}")
    cells: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        cells[r.topic_id if grouping == "per_topic" else "*"].append(i)
    return cells


def label_dataset(records: Sequence[KnowledgeRecord], grouping: str = "per_topic") -> list[KnowledgeRecord]:
    """Return copies of ``records`` with ``state_class`` and ``gain_class`` set.

    State classes come from z-standardized post-test scores and gain classes
    from z-standardized gains, both computed within each grouping cell.
    """
    records = list(records)
    for r in records:
        if r.gain is None:
            raise KnowledgeError(f"record {r.user_id}/{r.topic_id} lacks a pre or post score")
    state = [None] * len(records)
    gain = [None] * len(records)
    for cell, idx in _cells(records, grouping).items():
        try:
            z_state = standardize([records[i].post_score for i in idx])
            z_gain = standardize([records[i].gain for i in idx])
        except DegenerateDistributionError as exc:
            raise DegenerateDistributionError(f"topic {cell!r}: {exc}") from None
        for i, zs, zg in zip(idx, z_state, z_gain):
            state[i] = bin_class(zs)
            gain[i] = bin_class(zg)
    return [replace(r, state_class=s, gain_class=g) for r, s, g in zip(records, state, gain)]


def cronbach_alpha(item_matrix) -> float:
    """Internal consistency of a users x items 0/1 score matrix."""
    m = np.asarray(item_matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise DegenerateDistributionError("need at least two users and two items")
    k = m.shape[1]
    total_var = m.sum(axis=1).var(ddof=1)
    if not total_var > 0:
        raise DegenerateDistributionError("total scores have zero variance")
    return k / (k - 1) * (1.0 - m.var(axis=0, ddof=1).sum() / total_var)


@dataclass(frozen=True)
class TopicStats:
    topic_id: str
    n: int
    pre_mean: float
    pre_sd: float
    post_mean: float
    post_sd: float
    gain_mean: float
    gain_sd: float


def _stats(topic_id, rows) -> TopicStats:
    def ms(vals):
        a = np.asarray(vals, dtype=float)
        return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0

    pre = ms([r.pre_score for r in rows])
    post = ms([r.post_score for r in rows])
    gain = ms([r.gain for r in rows])
    return TopicStats(topic_id, len(rows), *pre, *post, *gain)


def describe_topics(records: Sequence[KnowledgeRecord]) -> tuple[list[TopicStats], TopicStats, float]:
    """Per-topic score summary ordered by ascending mean gain.

    Returns ``(topic_rows, overall_row, familiarity_r)`` where ``familiarity_r``
    is the Pearson correlation between per-topic mean pre-test score and mean
    gain (NaN with fewer than two topics or no spread).
    """
    records = [r for r in records if r.gain is not None]
    if not records:
        raise KnowledgeError("no scored records")
    by_topic = defaultdict(list)
    for r in records:
        by_topic[r.topic_id].append(r)
    rows = sorted((_stats(t, rs) for t, rs in by_topic.items()), key=lambda s: (s.gain_mean, s.topic_id))
    overall = _stats("Overall", records)
    familiarity = float("nan")
    if len(rows) >= 2:
        pre = np.array([s.pre_mean for s in rows])
        gain = np.array([s.gain_mean for s in rows])
        if pre.std() > 0 and gain.std() > 0:
            familiarity = float(np.corrcoef(pre, gain)[0, 1])
    return rows, overall, familiarity


def format_topic_table(rows: Iterable[TopicStats], overall: TopicStats, familiarity: float) -> str:
    def cell(m, sd):
        return f"{100 * m:.2f} ± {100 * sd:.2f}"

    lines = [f"{'Topic':<32}{'Calibration (%)':>20}{'Post (%)':>20}{'Gain (%)':>20}"]
    for s in [*rows, overall]:
        name = f"{s.topic_id} (N={s.n})"
        lines.append(f"{name:<32}{cell(s.pre_mean, s.pre_sd):>20}"
                     f"{cell(s.post_mean, s.post_sd):>20}{cell(s.gain_mean, s.gain_sd):>20}")
    lines.append(f"familiarity correlation r = {familiarity:.3f}")
    return "\n".join(lines)


# -- file formats ---------------------------------------------------------

def load_records(path) -> list[KnowledgeRecord]:
    """Read ``{"topics": {id: {"answer_key": [...]}}, "users": [...]}``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return records_from_document(doc)


def records_from_document(doc: dict) -> list[KnowledgeRecord]:
    try:
        topics = doc.get("topics", {})
        out = []
        for u in doc["users"]:
            topic_id = str(u["topic_id"])
            key = u.get("answer_key") or topics.get(topic_id, {}).get("answer_key")
            out.append(KnowledgeRecord(
                user_id=str(u["user_id"]),
                topic_id=topic_id,
                pre_answers=u.get("pre_answers"),
                post_answers=u.get("post_answers") or None,
                answer_key=key,
                pre_score=u.get("pre_score") if key is None else None,
                post_score=u.get("post_score") if key is None else None,
            ))
    except (KeyError, TypeError, AttributeError) as exc:
        raise KnowledgeError(f"malformed records document: {exc!r}") from None
    return out


def _pairs(mapping: dict | None, value_key: str):
    if mapping is None:
        return None
    return [{"item_id": k, value_key: v} for k, v in mapping.items()]


def records_to_document(records: Sequence[KnowledgeRecord]) -> dict:
    topics: dict[str, dict] = {}
    users = []
    for r in records:
        if r.answer_key is not None:
            topics.setdefault(r.topic_id, {"answer_key": _pairs(r.answer_key, "truth")})
        entry = {"user_id": r.user_id, "topic_id": r.topic_id,
                 "pre_answers": _pairs(r.pre_answers, "answer"),
                 "post_answers": _pairs(r.post_answers, "answer")}
        for name in ("pre_score", "post_score", "gain", "state_class", "gain_class"):
            value = getattr(r, name)
            if value is not None:
                entry[name] = value
        users.append(entry)
    return {"topics": topics, "users": users}


LABEL_COLUMNS = ("user_id", "topic_id", "pre", "post", "gain", "state_class", "gain_class")


def write_labels_csv(records: Sequence[KnowledgeRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LABEL_COLUMNS)
    for r in records:
        w.writerow([r.user_id, r.topic_id, repr(r.pre_score), repr(r.post_score), repr(r.gain),
                    r.state_class, r.gain_class])


def read_labels_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(LABEL_COLUMNS) - set(rows[0] if rows else LABEL_COLUMNS)
    if missing:
        raise KnowledgeError(f"labels file lacks columns {sorted(missing)}")
    for row in rows:
        for col in ("pre", "post", "gain"):
            row[col] = float(row[col])
    return rows
