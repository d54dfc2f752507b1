import sys
from importlib import resources
from pathlib import Path

import pytest

from sessionlens.features import AoALexicon
from sessionlens.knowledge import load_records
from sessionlens.session_log import assemble_sessions, read_events

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = resources.files("sessionlens") / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir():
    return Path(str(FIXTURES))


@pytest.fixture(scope="session")
def s1_events(fixture_dir):
    return read_events(fixture_dir / "s1_events.jsonl")


@pytest.fixture(scope="session")
def s1_session(s1_events):
    (session,) = assemble_sessions(s1_events)
    return session


@pytest.fixture(scope="session")
def s1_lexicon(fixture_dir):
    return AoALexicon.from_csv(fixture_dir / "s1_lexicon.csv")


@pytest.fixture(scope="session")
def s1_records(fixture_dir):
    return load_records(fixture_dir / "s1_records.json")
