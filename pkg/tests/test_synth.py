import json

import numpy as np
import pytest

from sessionlens.features import FEATURE_NAMES, extract_matrix
from sessionlens.knowledge import load_records
from sessionlens.selection import pearson
from sessionlens.session_log import assemble_sessions, filter_sessions, read_events
from sessionlens.synth import (
    EFFECT_SIZES, GeneratorSpec, SynthError, generate, load_spec, pipeline_dataset, planted_dataset,
)

PLANTED = "b_time_max_per_page"


@pytest.fixture(scope="module")
def planted_run():
    return generate(GeneratorSpec(n_sessions=300, seed=0, effects={PLANTED: "large"}))


def _kept(result):
    sessions = assemble_sessions(result.events, result.spec.serp_prefix)
    return sessions, filter_sessions(sessions, result.records)


def test_single_session_is_well_formed(tmp_path):
    result = generate(GeneratorSpec(n_sessions=1, seed=3))
    paths = result.write(tmp_path)
    events = read_events(paths["events"])
    records = load_records(paths["records"])
    sessions = assemble_sessions(events, result.spec.serp_prefix)
    kept, rejected = filter_sessions(sessions, records)
    assert len(kept) == 1 and rejected == []


def test_no_rejects_and_finite_features(planted_run):
    sessions, (kept, rejected) = _kept(planted_run)
    assert len(sessions) == 300 and len(kept) == 300 and rejected == []
    matrix = extract_matrix(kept, planted_run.lexicon)
    assert matrix.values.shape == (300, 70)
    assert np.all(np.isfinite(matrix.values))


def test_large_effect_correlates_with_gain(planted_run):
    ds = pipeline_dataset(planted_run)
    assert pearson(ds.X[:, ds.columns.index(PLANTED)], ds.target) >= 0.5


def test_state_effect_correlates_with_post_score():
    spec = GeneratorSpec(n_sessions=300, seed=1, effects={"q_num": {"state": "large"}})
    ds = pipeline_dataset(generate(spec), target="state")
    assert pearson(ds.X[:, ds.columns.index("q_num")], ds.target) >= 0.5


def test_no_effect_means_no_correlation():
    ds = pipeline_dataset(generate(GeneratorSpec(n_sessions=300, seed=2)))
    assert abs(pearson(ds.X[:, ds.columns.index(PLANTED)], ds.target)) < 0.2


def test_same_spec_gives_identical_files(tmp_path):
    spec = GeneratorSpec(n_sessions=20, seed=9, effects={"q_num": "small"})
    a = generate(spec).write(tmp_path / "a")
    b = generate(spec).write(tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes()
    c = generate(GeneratorSpec(n_sessions=20, seed=10)).write(tmp_path / "c")
    assert a["events"].read_bytes() != c["events"].read_bytes()


def test_sessions_are_independent_of_corpus_size():
    small = generate(GeneratorSpec(n_sessions=5, seed=4))
    big = generate(GeneratorSpec(n_sessions=12, seed=4))
    ids = {e.session_id for e in small.events}
    assert small.events == [e for e in big.events if e.session_id in ids]


def test_gain_scores_within_half_an_item(planted_run):
    d = planted_run.spec.distributions
    for rec, lat in zip(planted_run.records, planted_run.latent_gain):
        m = len(rec.answer_key)
        intended = float(np.clip(d.gain_mean + d.gain_sd * lat, -1.0, 1.0))
        assert abs(rec.gain - intended) <= 0.5 / m + 1e-12
        assert 0.0 <= rec.pre_score <= 1.0 and 0.0 <= rec.post_score <= 1.0


def test_state_scores_within_half_an_item():
    result = generate(GeneratorSpec(n_sessions=100, seed=5, effects={"q_num": {"state": "medium"}}))
    d = result.spec.distributions
    for rec, lat in zip(result.records, result.latent_state):
        m = len(rec.answer_key)
        intended = float(np.clip(d.state_mean + d.state_sd * lat, 0.0, 1.0))
        assert abs(rec.post_score - intended) <= 0.5 / m + 1e-12


def test_feature_means_match_targets():
    result = generate(GeneratorSpec(n_sessions=5000, seed=0))
    sessions = assemble_sessions(result.events, result.spec.serp_prefix)
    matrix = extract_matrix(sessions, result.lexicon)
    d = result.spec.distributions
    targets = {
        "s_duration": d.duration_min_mean * 60.0,
        "q_num": d.queries_mean,
        "b_num": d.pages_mean,
        "q_term_avg": d.query_len_mean,
    }
    for name, mean in targets.items():
        x = matrix.column(name)
        se = x.std(ddof=1) / np.sqrt(x.size)
        assert abs(x.mean() - mean) <= 3 * se, name


def test_unknown_effect_feature_raises():
    with pytest.raises(SynthError, match="unknown"):
        GeneratorSpec(effects={"not_a_feature": "large"})
    with pytest.raises(SynthError):
        GeneratorSpec(effects={PLANTED: "huge"})
    with pytest.raises(SynthError):
        GeneratorSpec(effects={PLANTED: {"speed": 1.0}})
    with pytest.raises(SynthError):
        GeneratorSpec(n_sessions=0)


def test_named_effect_sizes_are_ordered():
    sizes = [EFFECT_SIZES[k] for k in ("none", "small", "medium", "large")]
    assert sizes == sorted(sizes) and sizes[0] == 0.0


def test_spec_documents_round_trip(tmp_path):
    spec = GeneratorSpec(n_sessions=7, seed=2, effects={PLANTED: {"gain": "medium", "state": 0.5}})
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert load_spec(path) == spec
    assert load_spec(path, seed=99).seed == 99
    path.write_text("{oops")
    with pytest.raises(SynthError):
        load_spec(path)
    path.write_text(json.dumps({"n_sessions": 3, "colour": "red"}))
    with pytest.raises(SynthError):
        load_spec(path)


def test_planted_dataset_shape_and_labels():
    ds = planted_dataset(90, {"q_num": 2.0}, seed=0)
    assert ds.X.shape == (90, len(FEATURE_NAMES))
    assert set(ds.y.tolist()) <= {0, 1, 2}
    assert pearson(ds.X[:, FEATURE_NAMES.index("q_num")], ds.target) > 0.8
    with pytest.raises(SynthError):
        planted_dataset(10, {"nope": 1.0})
