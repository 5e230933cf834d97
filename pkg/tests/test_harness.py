from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from dialogsynth.configgen import build_configuration
from dialogsynth.gateway import ModelEndpoint
from dialogsynth.harness import (
    EVENTS,
    DialogueSession,
    SessionError,
    TurnFailed,
    build_system_prompt,
    open_session,
    run_session,
    run_turn,
    selected_code_of,
)
from dialogsynth.corpus import read_lines, selected_text
from dialogsynth.stub import StubChatClient
from dialogsynth.taxonomy import ChatConfiguration, CursorSpec, LineRange, TurnSpec

from .strategies import SAMPLE_LABELS

ASSISTANT = StubChatClient(ModelEndpoint(id="stub-assistant", base_url="stub://"))


def _config(index, turns=3, cursor=None, **labels):
    f = next(f for f in index.files if f.language == "python")
    lb = SAMPLE_LABELS.with_(programming_language="python", dialog_turns=turns, **labels)
    return ChatConfiguration(
        query_id="h1", labels=lb, repo=f.repo, file_path=f.path, file_line_count=f.line_count,
        cursor=cursor or CursorSpec(selections=(LineRange(5, 12),)),
        turns=tuple(TurnSpec(i, f"question number {i}?") for i in range(turns)),
    )


def test_history_is_carried_verbatim(corpus_index, tmp_path):
    session = run_session(_config(corpus_index), corpus_index, ASSISTANT, tmp_path)
    assert len(session.records) == 3
    for k, rec in enumerate(session.records):
        msgs = list(rec.messages)
        assert msgs[0]["role"] == "system"
        assert msgs[-1] == {"role": "user", "content": f"question number {k}?"}
        for j in range(k):
            prev = session.records[j]
            assert msgs[1 + 2 * j] == {"role": "user", "content": f"question number {j}?"}
            assert msgs[2 + 2 * j] == {"role": "assistant", "content": prev.response}
        assert rec.events_ordered()
        assert list(rec.events) == list(EVENTS)


def test_events_increase_across_turns(corpus_index, tmp_path):
    session = run_session(_config(corpus_index), corpus_index, ASSISTANT, tmp_path)
    seq = [rec.events[e] for rec in session.records for e in EVENTS]
    assert seq == sorted(seq) and len(set(seq)) == len(seq)


def test_workspace_is_removed_unless_kept(corpus_index, tmp_path):
    run_session(_config(corpus_index), corpus_index, ASSISTANT, tmp_path / "a")
    assert not any((tmp_path / "a").iterdir())
    run_session(_config(corpus_index), corpus_index, ASSISTANT, tmp_path / "b", keep_workspace=True)
    kept = list((tmp_path / "b").iterdir())
    assert len(kept) == 1 and (kept[0] / "src").is_dir()


def test_system_prompt_layout_and_selection_recovery(corpus_index, tmp_path):
    cfg = _config(corpus_index, turns=1)
    session = run_session(cfg, corpus_index, ASSISTANT, tmp_path)
    msgs = session.final_messages()
    system = msgs[0]["content"]
    assert system.index("Current file:") < system.index("Selected code (lines 5-12):")
    lines = read_lines(corpus_index.path_of(cfg.repo, cfg.file_path))
    assert selected_code_of(msgs) == selected_text(lines, cfg.cursor).rstrip()


def test_error_messages_follow_selection(corpus_index, tmp_path):
    cfg = _config(corpus_index, turns=1, reference_regions=frozenset({"error_messages", "selected_code"}))
    cfg = ChatConfiguration(**{**cfg.__dict__, "error_messages": "Code: x\nError Messages: boom"})
    ws = open_session(cfg, corpus_index, tmp_path)
    from dialogsynth.harness import _apply_cursor

    _apply_cursor(ws, cfg.cursor)
    prompt = build_system_prompt(ws)
    assert prompt.index("Selected code") < prompt.index("Error messages:\nCode: x")


def test_cursor_state_carries_forward(corpus_index, tmp_path):
    cfg = _config(corpus_index)
    later = CursorSpec(cursor_line=30)
    cfg = ChatConfiguration(**{**cfg.__dict__, "turns": (
        TurnSpec(0, "a?"), TurnSpec(1, "b?"), TurnSpec(2, "c?", later))})
    session = run_session(cfg, corpus_index, ASSISTANT, tmp_path)
    assert [r.cursor for r in session.records] == [cfg.cursor, cfg.cursor, later]
    assert "Cursor position: line 30" in session.records[2].messages[0]["content"]


def test_failed_turn_raises_and_cleans_up(corpus_index, tmp_path):
    flaky = StubChatClient(ModelEndpoint(id="flaky", base_url="stub://"), fail_after_user_turns=1)
    with pytest.raises(TurnFailed) as err:
        run_session(_config(corpus_index), corpus_index, flaky, tmp_path)
    assert err.value.turn_index == 1
    assert not any(tmp_path.iterdir())


def test_out_of_range_selection(corpus_index, tmp_path):
    cfg = _config(corpus_index, cursor=CursorSpec(selections=(LineRange(5, 10_000),)))
    with pytest.raises(SessionError, match="outside"):
        run_session(cfg, corpus_index, ASSISTANT, tmp_path)


def test_missing_file_names_path(corpus_index, tmp_path):
    cfg = _config(corpus_index)
    cfg = ChatConfiguration(**{**cfg.__dict__, "file_path": "src/ghost.py"})
    with pytest.raises(SessionError, match="ghost.py"):
        run_session(cfg, corpus_index, ASSISTANT, tmp_path)


def test_turn_budget_enforced(corpus_index, tmp_path):
    cfg = _config(corpus_index, turns=1)
    ws = open_session(cfg, corpus_index, tmp_path)
    run_turn(ws, cfg.turns[0], ASSISTANT)
    with pytest.raises(SessionError):
        run_turn(ws, cfg.turns[0], ASSISTANT)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_session_round_trip(corpus_index, tmp_path_factory, turns, seed):
    helper = StubChatClient(ModelEndpoint(id="stub-helper", base_url="stub://"))
    lb = SAMPLE_LABELS.with_(dialog_turns=turns)
    out = build_configuration(f"q{seed}", lb, corpus_index, helper, seed)
    if out.config is None:
        return
    session = run_session(out.config, corpus_index, ASSISTANT, tmp_path_factory.mktemp("ws"), seed=seed)
    again = DialogueSession.from_dict(json.loads(json.dumps(session.to_dict())))
    assert again == session
    assert sum(m["role"] == "user" for m in session.final_messages()) == turns
