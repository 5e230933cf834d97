from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from dialogsynth.analyst import classify_rule_dims
from dialogsynth.configgen import (
    build_configuration,
    compose_query,
    derive_seed,
    filter_query,
    parse_verdict,
    synthesize_error_messages,
)
from dialogsynth.corpus import (
    MIN_LINES,
    CorpusGap,
    RepoCorpusIndex,
    context_window,
    realize_cursor,
    sample_repository,
)
from dialogsynth.gateway import ModelEndpoint
from dialogsynth.stub import StubChatClient
from dialogsynth.taxonomy import (
    CURSOR_BEHAVIORS,
    DEFAULT_TAXONOMY,
    CursorSpec,
    EditorSnapshot,
    LineRange,
    QaInteraction,
    cursor_behavior_of,
    validate_configuration,
)

from .strategies import SAMPLE_LABELS, labels as label_strategy

HELPER = StubChatClient(ModelEndpoint(id="stub-helper", base_url="stub://"))


def test_index_covers_all_languages(corpus_index):
    langs = {f.language for f in corpus_index.files}
    assert langs == set(DEFAULT_TAXONOMY.languages)
    assert corpus_index.problems() == []
    assert all(not f.path.endswith(".md") for f in corpus_index.files)


def test_index_save_load(tmp_path, corpus_index):
    path = tmp_path / "index.json"
    corpus_index.save(path)
    assert RepoCorpusIndex.load(path) == corpus_index


@settings(max_examples=200)
@given(st.sampled_from(CURSOR_BEHAVIORS[1:]), st.integers(1, 400), st.integers(0, 2**32))
def test_realized_cursor_matches_behavior(behavior, n, seed):
    if n < MIN_LINES[behavior]:
        with pytest.raises(ValueError):
            realize_cursor(behavior, n, random.Random(seed))
        return
    spec = realize_cursor(behavior, n, random.Random(seed))
    assert cursor_behavior_of("f.py", spec.selections) == behavior
    ranges = sorted(spec.selections)
    for r in ranges:
        assert 1 <= r.start <= r.end <= n
    for a, b in zip(ranges, ranges[1:]):
        assert b.start > a.end + 1, "ranges must not touch"


def test_corpus_gap(corpus_index):
    small = RepoCorpusIndex(corpus_index.roots, tuple(f for f in corpus_index.files if f.language != "rust"))
    with pytest.raises(CorpusGap, match="corpus gap: rust"):
        sample_repository("rust", "select_block", small, random.Random(0))
    assert sample_repository("rust", "no_active_file", small, random.Random(0)).file_path is None


@given(st.integers(1, 500), st.integers(1, 500))
def test_context_window_bounds(n, line):
    lines = ["x"] * n
    lo, hi = context_window(lines, CursorSpec(cursor_line=min(line, n)))
    assert 1 <= lo <= min(line, n) <= hi <= n
    assert hi - lo + 1 <= 200


def test_derive_seed_stable():
    assert derive_seed(1, "q", 0) == derive_seed(1, "q", 0)
    assert derive_seed(1, "q", 0) != derive_seed(1, "q", 1)
    assert 0 <= derive_seed("anything") < 2**63


@pytest.mark.parametrize("language", DEFAULT_TAXONOMY.languages)
def test_error_messages_format(language):
    text = synthesize_error_messages(language, random.Random(1))
    assert text.startswith("Code: ") and "\nError Messages: " in text


@settings(max_examples=100)
@given(label_strategy, st.text(alphabet="abcdefgh ?", min_size=3, max_size=30).filter(lambda s: s.strip()))
def test_composed_query_reproduces_rule_labels(lb, body):
    query = compose_query(body.strip(), lb, DEFAULT_TAXONOMY)
    inter = QaInteraction("x", query, system_locale=lb.system_locale)
    rule = classify_rule_dims(inter)
    assert rule["instruction_type"] == lb.instruction_type
    if lb.instruction_type != "template_only":
        assert rule["query_locale_requirement"] == lb.query_locale_requirement


@pytest.mark.parametrize("reply,passed", [
    ('{"pass": true, "rationale": ""}', True),
    ('verdict: {"pass": false, "rationale": "off-topic"}', False),
])
def test_parse_verdict(reply, passed):
    assert parse_verdict(reply).passed is passed
    assert parse_verdict("yes") is None


def test_filter_unparseable_rejects():
    lb = SAMPLE_LABELS
    verdict = filter_query("q", lb, StubChatClient(task_replies={"filter_query": "looks fine"}))
    assert not verdict.passed and verdict.rationale == "unparseable"


@settings(max_examples=60, deadline=None)
@given(label_strategy, st.integers(0, 1000))
def test_built_configurations_are_valid(corpus_index, lb, seed):
    lb = _plannable(lb)
    out = build_configuration(f"q{seed}", lb, corpus_index, HELPER, seed)
    if out.config is None:
        assert out.drop_reason
        return
    cfg = out.config
    assert validate_configuration(cfg) == []
    assert len(cfg.turns) == lb.dialog_turns
    first = QaInteraction("x", cfg.turns[0].query, system_locale=lb.system_locale,
                          snapshot=EditorSnapshot(cfg.file_path, cfg.cursor.selections))
    rule = classify_rule_dims(first)
    assert rule["instruction_type"] == lb.instruction_type
    assert rule["query_locale_requirement"] == lb.query_locale_requirement
    assert rule["cursor_behavior"] == lb.cursor_behavior
    if cfg.file_path:
        assert rule["programming_language"] == lb.programming_language
    assert ("error_messages" in lb.reference_regions) == bool(cfg.error_messages)


def test_build_is_deterministic(corpus_index):
    lb = _plannable(SAMPLE_LABELS)
    a = build_configuration("q1", lb, corpus_index, HELPER, 5)
    b = build_configuration("q1", lb, corpus_index, HELPER, 5)
    assert a == b


def test_filter_rejections_drop_the_query(corpus_index):
    lb = _plannable(SAMPLE_LABELS).with_(instruction_type="query", dialog_turns=1)
    strict = StubChatClient(ModelEndpoint(id="strict", base_url="stub://"), filter_pass_rate=0.0)
    out = build_configuration("q9", lb, corpus_index, strict, 0)
    assert out.config is None and "rejected 3 times" in out.drop_reason and out.attempts == 3


def _plannable(lb):
    """Bring arbitrary labels inside the planner's constraints."""
    lb = lb.with_(dialog_turns=min(lb.dialog_turns, 3))
    if lb.cursor_behavior == "no_active_file":
        lb = lb.with_(trigger_method="chat_view")
    if lb.cursor_behavior in ("no_active_file", "have_active_file"):
        lb = lb.with_(instruction_type="query", reference_regions=lb.reference_regions - {"selected_code"} or frozenset({"question"}))
    if lb.instruction_type == "template_only":
        lb = lb.with_(query_locale_requirement="none")
    return lb
