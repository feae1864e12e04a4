from __future__ import annotations

from importlib import resources

import pytest

from regrag.config import EngineConfig
from regrag.ingest import load_document
from regrag.store import CorpusStore

FIG2_QUESTION = "Which AI systems are considered high risk?"


def fixture_doc_path() -> str:
    return str(resources.files("regrag").joinpath("fixtures/ai_act_excerpts.md"))


def eval_cases_path() -> str:
    return str(resources.files("regrag").joinpath("fixtures/eval_cases.jsonl"))


@pytest.fixture(scope="session")
def fixture_store(tmp_path_factory) -> CorpusStore:
    """Fully built corpus over the bundled 12-article fixture (read-only)."""
    corpus = tmp_path_factory.mktemp("fixture-corpus")
    store = CorpusStore(corpus, EngineConfig())
    doc = load_document(fixture_doc_path(), title="ai_act_excerpts")
    store.ingest_document(doc)
    store.build()
    return store


@pytest.fixture(scope="session")
def fixture_chunks(fixture_store):
    return fixture_store.load_chunks()


def chunk_id_for_article(chunks, number: str) -> str:
    for chunk in chunks:
        if chunk.section_path[0].split()[1] == number:
            return chunk.chunk_id
    raise AssertionError(f"no chunk for article {number}")


_acceptance_results: list[tuple[str, str]] = []


def record_criterion(name: str, passed: bool) -> None:
    _acceptance_results.append((name, "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_results:
        terminalreporter.section("acceptance criteria")
        for name, status in _acceptance_results:
            terminalreporter.write_line(f"[{status}] {name}")
