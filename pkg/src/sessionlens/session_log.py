"""Event-log parsing, session assembly and participant filtering.

The canonical log is UTF-8 JSON Lines, one event per line::

    {"session_id": "S1", "timestamp": 0, "kind": "query",
     "payload": {"text": "altitude sickness symptoms"},
     "user_id": "U1", "topic_id": "altitude_sickness"}

``user_id`` and ``topic_id`` are optional; a session takes them from the
first event that carries them and otherwise falls back to ``session_id`` and
``"default"``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import groupby
from typing import Any, Iterable, Sequence

from ._text import DEFAULT_IDLE_WINDOW_S, active_time, tokenize, url_domain

DEFAULT_SERP_PREFIX = "https://searchwell.example/serp"

EVENT_KINDS = (
    "query",
    "serp_render",
    "serp_click",
    "page_load",
    "page_leave",
    "mouseover",
    "scroll",
    "keypress",
)

INTERACTION_KINDS = frozenset({"mouseover", "scroll", "keypress", "serp_click"})

REJECT_REASONS = ("missing_record", "no_queries", "missing_post_test", "straight_lining")


class SessionLogError(ValueError):
    """Base class for malformed or inconsistent event logs."""


class ParseError(SessionLogError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class SchemaError(SessionLogError):
    pass


class ValidationError(SessionLogError):
    def __init__(self, session_id: str, message: str):
        super().__init__(f"session {session_id!r}: {message}")
        self.session_id = session_id


# (name, type, default); a default of ``...`` marks a required field
_PAYLOAD_FIELDS: dict[str, tuple[tuple[str, type, Any], ...]] = {
    "query": (("text", str, ...),),
    "serp_render": (("query_index", int, ...), ("result_count", int, ...), ("results", list, [])),
    "serp_click": (("rank", int, ...), ("url", str, "")),
    "page_load": (("url", str, ...), ("title", str, ""), ("size_bytes", int, 0), ("referrer_url", str, "")),
    "page_leave": (("url", str, ...),),
    "mouseover": (("rank", int, ...),),
    "scroll": (("delta_px", int, ...), ("position_px", int, 0)),
    "keypress": (),
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _normalize_payload(kind: str, payload: dict) -> dict:
    out = {}
    for name, typ, default in _PAYLOAD_FIELDS[kind]:
        if name not in payload:
            if default is ...:
                raise SchemaError(f"{kind} payload lacks {name!r}")
            value = list(default) if isinstance(default, list) else default
        else:
            value = payload[name]
            ok = _is_int(value) if typ is int else isinstance(value, typ)
            if not ok:
                raise SchemaError(f"{kind}.{name} must be {typ.__name__}, got {value!r}")
        out[name] = value
    if "rank" in out and out["rank"] < 1:
        raise SchemaError(f"{kind}.rank must be >= 1")
    if kind == "serp_render":
        if out["result_count"] < 0 or out["query_index"] < 0:
            raise SchemaError("serp_render counts must be non-negative")
        results = []
        for item in out["results"]:
            if not isinstance(item, dict) or not _is_int(item.get("rank")) or item["rank"] < 1:
                raise SchemaError(f"malformed serp result {item!r}")
            results.append({"rank": item["rank"], "url": str(item.get("url", "")),
                            "title": str(item.get("title", ""))})
        out["results"] = results
    if kind == "page_load" and out["size_bytes"] < 0:
        raise SchemaError("page_load.size_bytes must be >= 0")
    if kind == "scroll" and out["position_px"] < 0:
        raise SchemaError("scroll.position_px must be >= 0")
    return out


@dataclass(frozen=True)
class Event:
    session_id: str
    timestamp: int
    kind: str
    payload: dict = field(default_factory=dict, compare=True, hash=False)
    user_id: str | None = None
    topic_id: str | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise SchemaError(f"unknown event kind {self.kind!r}")
        if not _is_int(self.timestamp) or self.timestamp < 0:
            raise SchemaError(f"timestamp must be a non-negative integer, got {self.timestamp!r}")
        object.__setattr__(self, "payload", _normalize_payload(self.kind, dict(self.payload)))

    @classmethod
    def from_dict(cls, record: dict) -> "Event":
        if not isinstance(record, dict):
            raise SchemaError("event must be a JSON object")
        for key in ("session_id", "timestamp", "kind"):
            if key not in record:
                raise SchemaError(f"event lacks {key!r}")
        payload = record.get("payload", {})
        if not isinstance(payload, dict):
            raise SchemaError("payload must be an object")
        return cls(
            session_id=str(record["session_id"]),
            timestamp=record["timestamp"],
            kind=record["kind"],
            payload=payload,
            user_id=None if record.get("user_id") is None else str(record["user_id"]),
            topic_id=None if record.get("topic_id") is None else str(record["topic_id"]),
        )

    def to_dict(self) -> dict:
        out = {"session_id": self.session_id, "timestamp": self.timestamp,
               "kind": self.kind, "payload": self.payload}
        if self.user_id is not None:
            out["user_id"] = self.user_id
        if self.topic_id is not None:
            out["topic_id"] = self.topic_id
        return out


@dataclass(frozen=True)
class Query:
    text: str
    terms: tuple[str, ...]
    unique_terms: frozenset[str]
    timestamp: int
    index: int


@dataclass(frozen=True)
class PageVisit:
    url: str
    title: str
    size_bytes: int
    domain: str
    enter: int
    exit: int
    active_s: float
    from_serp: bool
    is_serp: bool
    associated_query_index: int

    @property
    def dwell_s(self) -> float:
        return (self.exit - self.enter) / 1000.0


@dataclass(frozen=True)
class Session:
    session_id: str
    user_id: str
    topic_id: str
    events: tuple[Event, ...]
    queries: tuple[Query, ...]
    page_visits: tuple[PageVisit, ...]
    start: int
    end: int

    @property
    def duration_s(self) -> float:
        return (self.end - self.start) / 1000.0

    def query_index_at(self, timestamp: int) -> int:
        """Index of the latest query issued at or before ``timestamp`` (0 before any)."""
        idx = 0
        for q in self.queries:
            if q.timestamp <= timestamp:
                idx = q.index
            else:
                break
        return idx


def parse_event_stream(raw: str | Iterable[str]) -> list[Event]:
    lines = raw.splitlines() if isinstance(raw, str) else raw
    events = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"malformed JSON ({exc.msg})") from None
        try:
            events.append(Event.from_dict(record))
        except SchemaError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from None
    return events


def serialize_events(events: Iterable[Event]) -> str:
    return "".join(json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for e in events)


def read_events(path) -> list[Event]:
    with open(path, encoding="utf-8") as fh:
        return parse_event_stream(fh)


class _VisitBuilder:
    """Open page or SERP interval awaiting its exit timestamp."""

    __slots__ = ("url", "title", "size_bytes", "enter", "from_serp", "is_serp", "query_index")

    def __init__(self, url, title, size_bytes, enter, from_serp, is_serp, query_index):
        self.url = url
        self.title = title
        self.size_bytes = size_bytes
        self.enter = enter
        self.from_serp = from_serp
        self.is_serp = is_serp
        self.query_index = query_index

    def close(self, exit_ms: int, interactions: Sequence[int], idle_window_s: float) -> PageVisit:
        return PageVisit(
            url=self.url,
            title=self.title,
            size_bytes=self.size_bytes,
            domain=url_domain(self.url),
            enter=self.enter,
            exit=exit_ms,
            active_s=active_time(self.enter, exit_ms, interactions, idle_window_s),
            from_serp=self.from_serp,
            is_serp=self.is_serp,
            associated_query_index=self.query_index,
        )


def _build_session(
    session_id: str,
    events: list[Event],
    serp_prefix: str,
    idle_window_s: float,
) -> Session:
    events = sorted(events, key=lambda e: e.timestamp)
    user_id = next((e.user_id for e in events if e.user_id is not None), session_id)
    topic_id = next((e.topic_id for e in events if e.topic_id is not None), "default")
    start, end = events[0].timestamp, events[-1].timestamp
    interactions = [e.timestamp for e in events if e.kind in INTERACTION_KINDS]

    queries: list[Query] = []
    closed: list[tuple[_VisitBuilder, int]] = []
    open_pages: dict[str, _VisitBuilder] = {}
    serp: _VisitBuilder | None = None
    last_render: dict | None = None
    serp_live = False  # a results page has been rendered for the current query

    def current_query() -> int:
        return max(len(queries) - 1, 0)

    def close_serp(t: int) -> None:
        nonlocal serp
        if serp is not None:
            if t > serp.enter:  # zero-length results views carry no dwell
                closed.append((serp, t))
            serp = None

    def open_serp(t: int) -> None:
        nonlocal serp
        text = queries[-1].text if queries else ""
        serp = _VisitBuilder(serp_prefix, text, 0, t, False, True, current_query())

    for ev in events:
        t, p = ev.timestamp, ev.payload
        if ev.kind == "query":
            terms = tuple(tokenize(p["text"]))
            if not terms:
                raise ValidationError(session_id, f"query at {t} has no terms")
            queries.append(Query(p["text"], terms, frozenset(terms), t, len(queries)))
            close_serp(t)
            serp_live = False
        elif ev.kind == "serp_render":
            last_render = p
            close_serp(t)
            open_serp(t)
            serp_live = True
        elif ev.kind == "serp_click":
            if last_render is None:
                raise ValidationError(session_id, f"serp_click at {t} without a preceding serp_render")
            if p["rank"] > last_render["result_count"]:
                raise ValidationError(
                    session_id,
                    f"serp_click rank {p['rank']} exceeds result_count {last_render['result_count']}",
                )
        elif ev.kind == "page_load":
            close_serp(t)
            url = p["url"]
            if url in open_pages:
                closed.append((open_pages.pop(url), t))
            open_pages[url] = _VisitBuilder(
                url, p["title"], p["size_bytes"], t,
                bool(p["referrer_url"]) and p["referrer_url"].startswith(serp_prefix),
                url.startswith(serp_prefix), current_query(),
            )
        elif ev.kind == "page_leave":
            visit = open_pages.pop(p["url"], None)
            if visit is not None:
                closed.append((visit, t))
                if not open_pages and serp is None and serp_live:
                    open_serp(t)
    # dangling intervals are clipped at the session end
    close_serp(end)
    for visit in open_pages.values():
        closed.append((visit, end))

    closed.sort(key=lambda item: (item[0].enter, item[1]))
    visits = tuple(v.close(exit_ms, interactions, idle_window_s) for v, exit_ms in closed)
    return Session(session_id, user_id, topic_id, tuple(events), tuple(queries), visits, start, end)


def assemble_sessions(
    events: Iterable[Event],
    serp_prefix: str = DEFAULT_SERP_PREFIX,
    idle_window_s: float = DEFAULT_IDLE_WINDOW_S,
) -> list[Session]:
    """Group events by session and derive queries and page visits.

    SERP intervals are synthesized: one opens at every ``serp_render`` and
    whenever the user leaves the last open page while a results page is live;
    it closes at the next query, render or page load, and is dropped if that
    leaves it with zero duration. Page loads whose URL
    starts with ``serp_prefix`` are SERP visits as well.
    """
    key = lambda e: e.session_id  # noqa: E731
    grouped = sorted(events, key=key)  # stable: ties keep input order
    return [
        _build_session(sid, list(group), serp_prefix, idle_window_s)
        for sid, group in groupby(grouped, key=key)
    ]


def session_events(sessions: Iterable[Session]) -> list[Event]:
    return [e for s in sessions for e in s.events]


def _straight_lined(answers) -> bool:
    values = set(answers.values()) if isinstance(answers, dict) else set(answers)
    return len(values) == 1 and values <= {"TRUE", "FALSE"}


def filter_sessions(sessions, records) -> tuple[list[Session], list[tuple[str, str]]]:
    """Apply the participant-quality rules.

    Returns ``(kept, rejected)`` where each rejection is ``(session_id, reason)``
    and reason is one of ``REJECT_REASONS``.
    """
    by_key = {(r.user_id, r.topic_id): r for r in records}
    kept, rejected = [], []
    for s in sessions:
        record = by_key.get((s.user_id, s.topic_id))
        if record is None:
            rejected.append((s.session_id, "missing_record"))
        elif not s.queries:
            rejected.append((s.session_id, "no_queries"))
        elif not record.post_answers:
            rejected.append((s.session_id, "missing_post_test"))
        elif _straight_lined(record.pre_answers) or _straight_lined(record.post_answers):
            rejected.append((s.session_id, "straight_lining"))
        else:
            kept.append(s)
    return kept, rejected
