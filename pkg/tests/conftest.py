import sys
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_transcript():
    from wordimp.corpus import parse_transcript

    with open(FIXTURES / "transcript.txt", encoding="utf-8") as handle:
        return parse_transcript(handle)


@pytest.fixture(scope="session")
def fixture_annotations(fixture_transcript):
    from wordimp.corpus import parse_annotations

    with open(FIXTURES / "annotations_full.tsv", encoding="utf-8") as handle:
        return parse_annotations(handle, fixture_transcript)
