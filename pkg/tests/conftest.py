from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
DATA_DIR = TESTS_DIR / "data"
REPO_ROOT = TESTS_DIR.parent
SAMPLE_DOCS = REPO_ROOT / "data" / "sample_api_docs.jsonl"


@pytest.fixture(scope="session")
def sample_kg():
    from dsrepair.ingest import ingest_corpus

    result = ingest_corpus(SAMPLE_DOCS)
    assert result.ok
    return result.graph


@pytest.fixture(scope="session")
def e2e_paths():
    return {
        "corpus": DATA_DIR / "e2e_corpus.jsonl",
        "mock_rules": DATA_DIR / "e2e_mock_rules.jsonl",
        "runner_transcript": DATA_DIR / "e2e_runner_transcript.jsonl",
    }
