import io
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naive_features import naive_extract
from s1_expected import EXPECTED, TIME_FEATURES, close_to_expected as _close
from sessionlens._text import active_time, tokenize, url_domain
from sessionlens.features import (
    FEATURE_NAMES, N_FEATURES, AoALexicon, FeatureExtractionError, FeatureMatrix,
    SessionFeatureExtractor, extract, extract_matrix, query_complexity, term_overlap,
)
from sessionlens.session_log import DEFAULT_SERP_PREFIX, Event, assemble_sessions
from sessionlens.synth import GeneratorSpec, generate


def test_feature_layout():
    assert N_FEATURES == 70 and len(set(FEATURE_NAMES)) == 70
    assert FEATURE_NAMES[:2] == ("s_duration", "s_duration_per_q")
    assert FEATURE_NAMES[-1] == "m_scroll_max_pos_per_q"


@pytest.mark.parametrize("name", FEATURE_NAMES)
def test_s1_hand_values(s1_session, s1_lexicon, name):
    got = extract(s1_session, s1_lexicon)[name]
    assert _close(name, got, EXPECTED[name]), (name, got, EXPECTED[name])


def test_s1_page_visits(s1_session):
    pages = [v for v in s1_session.page_visits if not v.is_serp]
    assert [(v.enter, v.exit, v.active_s) for v in pages] == [(10000, 70000, 60.0), (95000, 200000, 30.0)]
    assert [v.domain for v in pages] == ["wikipedia.org", "cdc.gov"]
    serps = [(v.enter, v.exit, v.associated_query_index) for v in s1_session.page_visits if v.is_serp]
    assert serps == [(0, 10000, 0), (70000, 80000, 0), (80000, 95000, 1)]


def test_naive_oracle_agrees_on_s1(s1_events, s1_session, s1_lexicon):
    ref = naive_extract([e.to_dict() for e in s1_events], s1_lexicon, DEFAULT_SERP_PREFIX)
    assert extract(s1_session, s1_lexicon).as_dict() == ref


def test_naive_oracle_200_synthetic_sessions():
    res = generate(GeneratorSpec(n_sessions=200, seed=2024))
    raw = defaultdict(list)
    for e in res.events:
        raw[e.session_id].append(e.to_dict())
    sessions = assemble_sessions(res.events)
    assert len(sessions) == 200
    for s in sessions:
        got = extract(s, res.lexicon).as_dict()
        assert got == naive_extract(raw[s.session_id], res.lexicon, DEFAULT_SERP_PREFIX), s.session_id


def test_synthetic_matrix_is_finite():
    res = generate(GeneratorSpec(n_sessions=100, seed=5))
    m = extract_matrix(assemble_sessions(res.events), res.lexicon)
    assert m.shape == (100, 70)
    assert np.isfinite(m.values).all()


def test_query_complexity_and_overlap():
    lex = AoALexicon({"altitude": 10.1, "sickness": 6.0})
    assert query_complexity(["altitude", "sickness", "zzz"], lex) == 10.1
    assert query_complexity(["zzz"], lex) == 0.0
    assert term_overlap({"a", "b", "c"}, {"a", "x"}) == pytest.approx(1 / 3)
    with pytest.raises(FeatureExtractionError):
        term_overlap(set(), {"a"})


def test_lexicon_rejects_nonpositive_and_is_case_insensitive(tmp_path):
    p = tmp_path / "lex.csv"
    p.write_text("word,aoa\nAltitude,10.1\nnope,NA\n")
    lex = AoALexicon.from_csv(p)
    assert lex["ALTITUDE"] == 10.1 and "nope" not in lex
    with pytest.raises(ValueError):
        AoALexicon({"x": 0})


def test_tokenize_and_domain():
    assert tokenize("Altitude sickness - Wikipedia") == ["altitude", "sickness", "wikipedia"]
    assert tokenize("https://wikipedia.org/wiki/Altitude_sickness") == [
        "https", "wikipedia", "org", "wiki", "altitude", "sickness"]
    assert url_domain("https://www.CDC.gov/travel") == "cdc.gov"
    assert url_domain("not a url") == ""


def test_active_time_windows():
    assert active_time(0, 100000, []) == 30.0
    assert active_time(0, 10000, []) == 10.0
    assert active_time(10000, 70000, [12000, 20000, 40000]) == 60.0
    # interactions outside the visit are ignored
    assert active_time(0, 60000, [90000]) == 30.0
    with pytest.raises(ValueError):
        active_time(10, 0, [])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6),
       st.lists(st.integers(0, 2 * 10**6), max_size=20), st.floats(1, 120))
def test_active_time_bounded_by_dwell(enter, length, inter, window):
    a = active_time(enter, enter + length, inter, window)
    assert 0 <= a <= length / 1000.0 + 1e-12
    assert a >= min(window, length / 1000.0) - 1e-9


def _ev(t, kind, **payload):
    return Event("X", t, kind, payload)


def test_session_without_clicks_or_pages_has_zero_fallbacks(s1_lexicon):
    (s,) = assemble_sessions([_ev(0, "query", text="altitude"), _ev(5000, "keypress")])
    f = extract(s, s1_lexicon)
    assert f["SERP_click"] == 0 and f["SERP_click_interval"] == 0.0
    assert f["b_num"] == 0 and f["b_time_avg_per_page"] == 0.0 and f["b_pct_from_SERP"] == 0.0
    assert f["SERP_no_click_query_pct"] == 1.0
    assert np.isfinite(f.values).all()


def test_session_without_queries_is_rejected(s1_lexicon):
    (s,) = assemble_sessions([_ev(0, "keypress")])
    with pytest.raises(FeatureExtractionError):
        extract(s, s1_lexicon)


def test_revisit_and_non_serp_navigation(s1_lexicon):
    evs = [
        _ev(0, "query", text="altitude"),
        _ev(0, "serp_render", query_index=0, result_count=5),
        _ev(1000, "serp_click", rank=2),
        _ev(1000, "page_load", url="https://a.example/x", referrer_url=DEFAULT_SERP_PREFIX + "?q=a"),
        _ev(5000, "page_load", url="https://b.example/y", referrer_url="https://a.example/x"),
        _ev(5000, "page_leave", url="https://a.example/x"),
        _ev(9000, "page_leave", url="https://b.example/y"),
        _ev(9500, "serp_click", rank=2),
        _ev(9500, "page_load", url="https://a.example/x", referrer_url=DEFAULT_SERP_PREFIX),
        _ev(12000, "page_leave", url="https://a.example/x"),
    ]
    (s,) = assemble_sessions(evs)
    f = extract(s, s1_lexicon)
    assert f["b_num"] == 3 and f["b_uniq_num"] == 2
    assert f["b_revisited_ratio"] == pytest.approx(1 / 3)
    assert f["b_num_from_non_SERP"] == 1 and f["b_num_from_SERP"] == 2
    assert f["SERP_time_total"] == pytest.approx(1.0 + 0.5)


def test_feature_matrix_csv_round_trip(s1_session, s1_lexicon, tmp_path):
    m = extract_matrix([s1_session], s1_lexicon)
    buf = io.StringIO()
    m.to_csv(buf)
    header, row = buf.getvalue().splitlines()
    assert header.split(",")[:3] == ["user_id", "topic_id", "s_duration"]
    assert row.startswith("U1,altitude_sickness,200,100,2,")
    p = tmp_path / "f.csv"
    p.write_text(buf.getvalue())
    back = FeatureMatrix.read_csv(p)
    assert back.keys == [("U1", "altitude_sickness")] and back.columns == FEATURE_NAMES
    assert np.array_equal(back.values, m.values)


def test_transformer_api(s1_session, s1_lexicon):
    t = SessionFeatureExtractor(lexicon=s1_lexicon)
    X = t.fit_transform([s1_session, s1_session])
    assert X.shape == (2, 70)
    assert list(t.get_feature_names_out()) == list(FEATURE_NAMES)
    assert t.get_params() == {"lexicon": s1_lexicon}
