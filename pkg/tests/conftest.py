from __future__ import annotations

import json
from pathlib import Path

import pytest

from dialogsynth.corpus import RepoCorpusIndex
from dialogsynth.gateway import stub_pool
from dialogsynth.synthetic import write_fixture_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    return write_fixture_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def corpus_index(corpus_dir) -> RepoCorpusIndex:
    return RepoCorpusIndex.from_directory(corpus_dir)


@pytest.fixture
def pool():
    return stub_pool()


@pytest.fixture(scope="session")
def labeled_interactions() -> list[dict]:
    with open(FIXTURES / "labeled_interactions.jsonl", encoding="utf-8") as f:
        return [json.loads(line) for line in f]


@pytest.fixture(scope="session")
def deduction_fixtures() -> list[dict]:
    return json.loads((FIXTURES / "deductions.json").read_text(encoding="utf-8"))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines: list[str] = []

    def record(label: str, ok: bool, detail: str = "") -> None:
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))

    yield record
    for line in lines:
        print(line)
        ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
