"""Headless editor simulation of the IDE plugin automation loop.

A session materializes the repository in a scratch directory, then for each
turn applies the selection (or else the cursor move, or else nothing), builds
the prompt the plugin would send, asks the assistant endpoint, and records the
exchange with ordered event sequence numbers.
"""

from __future__ import annotations

import itertools
import shutil
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import prompts
from .configgen import derive_seed
from .corpus import RepoCorpusIndex, context_window, slice_lines
from .gateway import Gateway, SamplingParams
from .taxonomy import DEFAULT_TAXONOMY, ChatConfiguration, CursorSpec, Taxonomy, TurnSpec

EVENTS = ("cursor_applied", "dialogue_triggered", "captured", "stored")


class SessionError(RuntimeError):
    pass


class TurnFailed(RuntimeError):
    def __init__(self, turn_index: int, cause: str):
        super().__init__(f"turn {turn_index} failed: {cause}")
        self.turn_index = turn_index
        self.cause = cause


@dataclass(frozen=True)
class TraceRecord:
    turn_index: int
    messages: tuple[Mapping[str, str], ...]
    cursor: CursorSpec
    trigger_method: str
    response: str
    endpoint_id: str
    events: Mapping[str, int]

    @property
    def prompt(self) -> str:
        return prompts.render_transcript(self.messages)

    def events_ordered(self) -> bool:
        seq = [self.events[e] for e in EVENTS]
        return all(a < b for a, b in zip(seq, seq[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_index": self.turn_index,
            "messages": [dict(m) for m in self.messages],
            "cursor": self.cursor.to_dict(),
            "trigger_method": self.trigger_method,
            "response": self.response,
            "endpoint_id": self.endpoint_id,
            "events": dict(self.events),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TraceRecord":
        return cls(
            turn_index=int(data["turn_index"]),
            messages=tuple({"role": m["role"], "content": m["content"]} for m in data["messages"]),
            cursor=CursorSpec.from_dict(data["cursor"]),
            trigger_method=data["trigger_method"],
            response=data["response"],
            endpoint_id=data["endpoint_id"],
            events={k: int(v) for k, v in data["events"].items()},
        )


@dataclass(frozen=True)
class DialogueSession:
    config: ChatConfiguration
    records: tuple[TraceRecord, ...]

    @property
    def query_id(self) -> str:
        return self.config.query_id

    def final_messages(self) -> list[dict[str, str]]:
        """Prompt of the last turn: what the generator pool answers."""
        return [dict(m) for m in self.records[-1].messages]

    def transcript(self) -> list[dict[str, str]]:
        return self.final_messages()

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.config.query_id,
            "round": self.config.round,
            "configuration": self.config.to_dict(),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "DialogueSession":
        return cls(
            config=ChatConfiguration.from_dict(data["configuration"], taxonomy),
            records=tuple(TraceRecord.from_dict(r) for r in data["records"]),
        )


@dataclass
class WorkspaceSession:
    session_id: str
    config: ChatConfiguration
    root: Path
    open_file: str | None
    lines: list[str]
    state: CursorSpec = CursorSpec()
    turn_counter: int = 0
    history: list[dict[str, str]] = field(default_factory=list)
    _seq: Any = field(default_factory=lambda: itertools.count(1), repr=False)

    def next_seq(self) -> int:
        return next(self._seq)


def open_session(
    config: ChatConfiguration,
    index: RepoCorpusIndex,
    work_root: str | Path,
    session_id: str | None = None,
) -> WorkspaceSession:
    """Copy the repository into ``work_root/<session_id>`` and open the target file."""
    session_id = session_id or f"{config.query_id}-r{config.round}-{uuid.uuid4().hex[:8]}"
    root = Path(work_root) / session_id
    if root.exists():
        shutil.rmtree(root)
    if config.repo is not None:
        if config.repo not in index.roots:
            raise SessionError(f"unknown repository {config.repo!r}")
        src = Path(index.roots[config.repo])
        if not src.is_dir():
            raise SessionError(f"repository path not found: {src}")
        shutil.copytree(src, root, symlinks=True)
    else:
        root.mkdir(parents=True)
    lines: list[str] = []
    if config.file_path:
        target = root / config.file_path
        if not target.is_file():
            shutil.rmtree(root, ignore_errors=True)
            raise SessionError(f"file not found: {config.repo}/{config.file_path}")
        lines = target.read_text(encoding="utf-8").splitlines()
    return WorkspaceSession(session_id, config, root, config.file_path, lines)


def close_session(session: WorkspaceSession, keep: bool = False) -> None:
    if not keep:
        shutil.rmtree(session.root, ignore_errors=True)


def _apply_cursor(session: WorkspaceSession, spec: CursorSpec | None) -> None:
    if spec is None:
        return
    n = len(session.lines)
    if spec.selections:
        for r in spec.selections:
            if r.start < 1 or r.end > n or r.end < r.start:
                raise SessionError(f"selection {r.to_list()} outside {session.open_file} ({n} lines)")
        session.state = CursorSpec(selections=spec.selections)
    elif spec.cursor_line is not None:
        if not 1 <= spec.cursor_line <= n:
            raise SessionError(f"cursor line {spec.cursor_line} outside {session.open_file} ({n} lines)")
        session.state = CursorSpec(cursor_line=spec.cursor_line)


def build_system_prompt(session: WorkspaceSession) -> str:
    """Preamble, file context, selection and error messages, in that order."""
    cfg = session.config
    labels = cfg.labels
    parts = [prompts.assistant_preamble(labels.trigger_method, labels.system_locale)]
    lang = labels.programming_language
    if session.open_file:
        span = context_window(session.lines, session.state)
        if span:
            lo, hi = span
            parts.append(
                f"Current file: {session.open_file} (lines {lo}-{hi}):\n"
                + prompts.fence(slice_lines(session.lines, lo, hi), lang)
            )
        if session.state.selections:
            ranges = sorted(session.state.selections)
            where = ", ".join(f"{r.start}-{r.end}" for r in ranges)
            code = "\n...\n".join(slice_lines(session.lines, r.start, r.end) for r in ranges)
            parts.append(f"Selected code (lines {where}):\n" + prompts.fence(code, lang))
        elif session.state.cursor_line is not None:
            parts.append(f"Cursor position: line {session.state.cursor_line}")
    if cfg.error_messages:
        parts.append("Error messages:\n" + cfg.error_messages)
    return "\n\n".join(parts)


def run_turn(
    session: WorkspaceSession,
    turn: TurnSpec,
    gateway: Gateway,
    params: SamplingParams | None = None,
) -> TraceRecord:
    cfg = session.config
    if session.turn_counter >= cfg.labels.dialog_turns:
        raise SessionError(f"session {session.session_id} already ran {session.turn_counter} turn(s)")
    spec = turn.cursor
    if spec is None and turn.index == 0:
        spec = cfg.cursor
    _apply_cursor(session, spec)
    cursor_seq = session.next_seq()

    messages = [{"role": "system", "content": build_system_prompt(session)}]
    messages += session.history
    messages.append({"role": "user", "content": turn.query})
    trigger_seq = session.next_seq()
    reply = gateway.complete(messages, params)
    if not reply.ok:
        raise TurnFailed(turn.index, reply.error or "endpoint error")
    captured_seq = session.next_seq()

    session.history += [{"role": "user", "content": turn.query}, {"role": "assistant", "content": reply.text}]
    session.turn_counter += 1
    stored_seq = session.next_seq()
    return TraceRecord(
        turn_index=turn.index,
        messages=tuple(messages),
        cursor=session.state,
        trigger_method=cfg.labels.trigger_method,
        response=reply.text,
        endpoint_id=reply.endpoint_id,
        events=dict(zip(EVENTS, (cursor_seq, trigger_seq, captured_seq, stored_seq))),
    )


def run_session(
    config: ChatConfiguration,
    index: RepoCorpusIndex,
    gateway: Gateway,
    work_root: str | Path,
    keep_workspace: bool = False,
    seed: int = 0,
) -> DialogueSession:
    """All turns of one configuration. Raises on any failed turn; no partial result."""
    session = open_session(config, index, work_root)
    try:
        records = []
        for turn in config.turns:
            params = SamplingParams(seed=derive_seed(seed, config.query_id, config.round, turn.index))
            records.append(run_turn(session, turn, gateway, params))
    finally:
        close_session(session, keep_workspace)
    return DialogueSession(config, tuple(records))


def all_events_ordered(sessions: Sequence[DialogueSession]) -> bool:
    return all(r.events_ordered() for s in sessions for r in s.records)


def selected_code_of(messages: Sequence[Mapping[str, str]]) -> str | None:
    """Recover the selected code block from a system prompt built by ``build_system_prompt``."""
    if not messages or messages[0].get("role") != "system":
        return None
    text = messages[0]["content"]
    marker = "\n\nSelected code (lines "
    at = text.find(marker)
    if at < 0:
        return None
    body = text[at + len(marker):].split("\n", 1)[1] if "\n" in text[at + len(marker):] else ""
    lines = body.split("\n")
    if not lines or not lines[0].startswith("```"):
        return None
    out = []
    for line in lines[1:]:
        if line.startswith("```"):
            return "\n".join(out)
        out.append(line)
    return None
