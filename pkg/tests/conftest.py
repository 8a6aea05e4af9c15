from pathlib import Path

import pytest

from shrag.documents import Corpus, Document, ingest
from shrag.engine import build_index

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "shrag" / "data"
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).parent / "golden"

GOLDEN_QUERY = "How do free textbook programs in schools reduce education costs? 무상 교과서 제도"
GOLDEN_QUERY_ID = "golden-001"


@pytest.fixture(scope="session")
def toy_corpus_path():
    return DATA / "toy_corpus.jsonl"


@pytest.fixture(scope="session")
def toy_corpus(toy_corpus_path):
    corpus, _ = ingest(toy_corpus_path)
    return corpus


@pytest.fixture(scope="session")
def toy_index(toy_corpus):
    return build_index(toy_corpus)


@pytest.fixture
def hand_corpus():
    """Three documents whose BM25 scores are worked out by hand in test_engine."""
    return Corpus([
        Document("d0", body="a a b"),
        Document("d1", body="b c"),
        Document("d2", body="c c c d"),
    ])


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}")
