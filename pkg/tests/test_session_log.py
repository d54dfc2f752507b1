import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sessionlens.knowledge import KnowledgeRecord
from sessionlens.session_log import (
    DEFAULT_SERP_PREFIX, Event, ParseError, SchemaError, ValidationError, assemble_sessions,
    filter_sessions, parse_event_stream, serialize_events, session_events,
)
from sessionlens.synth import GeneratorSpec, generate


def line(**kw):
    base = {"session_id": "A", "timestamp": 0, "kind": "query", "payload": {"text": "x"}}
    base.update(kw)
    return json.dumps(base)


def test_parse_empty_and_single_line():
    assert parse_event_stream("") == []
    evs = parse_event_stream(line() + "\n\n")
    assert len(evs) == 1 and evs[0].kind == "query"


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_event_stream("{not json")
    assert exc.value.lineno == 1
    with pytest.raises(SchemaError, match="line 2"):
        parse_event_stream(line() + "\n" + line(kind="teleport"))
    with pytest.raises(SchemaError):
        parse_event_stream(line(timestamp=-5))
    with pytest.raises(SchemaError):
        parse_event_stream(line(kind="serp_click", payload={"rank": 0}))
    with pytest.raises(SchemaError):
        parse_event_stream(line(kind="query", payload={}))


def test_unknown_fields_ignored():
    (e,) = parse_event_stream(line(extra=1, payload={"text": "x", "junk": True}))
    assert e.payload == {"text": "x"}


def test_round_trip(s1_events):
    text = serialize_events(s1_events)
    assert parse_event_stream(text) == s1_events
    assert serialize_events(parse_event_stream(text)) == text


def test_s1_assembly(s1_session):
    s = s1_session
    assert (s.session_id, s.user_id, s.topic_id) == ("S1", "U1", "altitude_sickness")
    assert [q.text for q in s.queries] == ["altitude sickness symptoms", "altitude sickness prevention medication"]
    assert len([v for v in s.page_visits if not v.is_serp]) == 2
    assert (s.start, s.end, s.duration_s) == (0, 200000, 200.0)
    assert s.query_index_at(79999) == 0 and s.query_index_at(80000) == 1


def test_grouping_and_sorting():
    evs = [Event("b", 5, "query", {"text": "two"}), Event("a", 9, "keypress"),
           Event("a", 1, "query", {"text": "one"})]
    sessions = assemble_sessions(evs)
    assert [s.session_id for s in sessions] == ["a", "b"]
    assert [e.timestamp for e in sessions[0].events] == [1, 9]
    assert sessions[0].user_id == "a" and sessions[0].topic_id == "default"


def test_tied_timestamps_keep_input_order():
    evs = [Event("a", 0, "query", {"text": "q"}), Event("a", 0, "keypress"), Event("a", 0, "scroll", {"delta_px": 1})]
    (s,) = assemble_sessions(evs)
    assert [e.kind for e in s.events] == ["query", "keypress", "scroll"]


def test_assembly_is_idempotent(s1_events):
    once = assemble_sessions(s1_events)
    assert assemble_sessions(session_events(once)) == once


def test_click_validation():
    with pytest.raises(ValidationError, match="'a'"):
        assemble_sessions([Event("a", 0, "query", {"text": "q"}), Event("a", 1, "serp_click", {"rank": 1})])
    with pytest.raises(ValidationError, match="exceeds"):
        assemble_sessions([
            Event("a", 0, "query", {"text": "q"}),
            Event("a", 0, "serp_render", {"query_index": 0, "result_count": 3}),
            Event("a", 1, "serp_click", {"rank": 4}),
        ])


def test_query_without_terms_rejected():
    with pytest.raises(ValidationError):
        assemble_sessions([Event("a", 0, "query", {"text": "  ?! "})])


def test_unclosed_page_clips_at_end_and_serp_prefix_pages():
    evs = [
        Event("a", 0, "query", {"text": "q"}),
        Event("a", 1000, "page_load", {"url": DEFAULT_SERP_PREFIX + "?q=q&page=2"}),
        Event("a", 2000, "page_load", {"url": "https://x.example/"}),
        Event("a", 9000, "keypress"),
    ]
    (s,) = assemble_sessions(evs)
    visits = {v.url: v for v in s.page_visits}
    assert visits["https://x.example/"].exit == 9000
    assert visits[DEFAULT_SERP_PREFIX + "?q=q&page=2"].is_serp
    assert not visits["https://x.example/"].from_serp


def _record(pre=None, post=None, user="U1", topic="altitude_sickness"):
    key = {f"i{j}": ("TRUE" if j % 2 == 0 else "FALSE") for j in range(4)}
    pre = pre if pre is not None else {"i0": "TRUE", "i1": "IDK", "i2": "FALSE", "i3": "FALSE"}
    post = post if post is not None else {"i0": "TRUE", "i1": "FALSE", "i2": "TRUE", "i3": "IDK"}
    return KnowledgeRecord(user, topic, pre, post or None, key)


def test_filter_rules(s1_session, s1_records):
    kept, rejected = filter_sessions([s1_session], s1_records)
    assert kept == [s1_session] and rejected == []
    assert filter_sessions([s1_session], [])[1] == [("S1", "missing_record")]
    all_true = {f"i{j}": "TRUE" for j in range(4)}
    assert filter_sessions([s1_session], [_record(post=all_true)])[1] == [("S1", "straight_lining")]
    all_false = {f"i{j}": "FALSE" for j in range(4)}
    assert filter_sessions([s1_session], [_record(pre=all_false)])[1] == [("S1", "straight_lining")]
    assert filter_sessions([s1_session], [_record(post={})])[1] == [("S1", "missing_post_test")]
    # all "I don't know" is not straight-lining on TRUE/FALSE
    all_idk = {f"i{j}": "IDK" for j in range(4)}
    assert filter_sessions([s1_session], [_record(pre=all_idk)])[1] == []


def test_filter_zero_queries():
    (s,) = assemble_sessions([Event("z", 0, "keypress", user_id="U1", topic_id="altitude_sickness")])
    assert filter_sessions([s], [_record()])[1] == [("z", "no_queries")]


def test_filter_idempotent():
    res = generate(GeneratorSpec(n_sessions=30, seed=3))
    kept, rejected = filter_sessions(assemble_sessions(res.events), res.records)
    assert rejected == []
    assert filter_sessions(kept, res.records) == (kept, [])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_visit_invariants(seed):
    res = generate(GeneratorSpec(n_sessions=3, seed=seed))
    for s in assemble_sessions(res.events):
        ts = [e.timestamp for e in s.events]
        assert ts == sorted(ts)
        for v in s.page_visits:
            assert s.start <= v.enter <= v.exit <= s.end
            assert 0 <= v.active_s <= v.dwell_s + 1e-12
        n_renders = sum(e.kind == "serp_render" for e in s.events)
        clicked = {s.query_index_at(e.timestamp) for e in s.events if e.kind == "serp_click"}
        assert n_renders >= len(clicked)
        for v in s.page_visits:
            if v.from_serp:
                assert any(e.kind in ("serp_click", "serp_render") and e.timestamp <= v.enter for e in s.events)
