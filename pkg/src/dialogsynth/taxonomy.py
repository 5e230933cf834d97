"""Behavioral taxonomy and the shared domain types.

Every value type here is frozen. Records cross the process boundary as JSONL
(one object per line, snake_case keys); ``to_dict``/``from_dict`` pairs are the
only serialization path so the on-disk form stays byte-stable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping


class Dimension(str, enum.Enum):
    CURSOR_BEHAVIOR = "cursor_behavior"
    TRIGGER_METHOD = "trigger_method"
    INSTRUCTION_TYPE = "instruction_type"
    PROGRAMMING_LANGUAGE = "programming_language"
    SYSTEM_LOCALE = "system_locale"
    DIALOG_TURNS = "dialog_turns"
    QUERY_LOCALE_REQUIREMENT = "query_locale_requirement"
    REFERENCE_REGIONS = "reference_regions"
    DIFFICULTY = "difficulty"
    INTENT = "intent"


DIMENSIONS: tuple[Dimension, ...] = tuple(Dimension)
RULE_DIMENSIONS: tuple[Dimension, ...] = DIMENSIONS[:7]
MODEL_DIMENSIONS: tuple[Dimension, ...] = DIMENSIONS[7:]

UNKNOWN = "unknown"
MAX_PLANNED_TURNS = 10

CURSOR_BEHAVIORS = (
    "no_active_file",
    "have_active_file",
    "select_block",
    "select_multiple_blocks",
    "select_line",
    "select_multiple_lines",
)
SELECTION_BEHAVIORS = frozenset(CURSOR_BEHAVIORS[2:])
TRIGGER_METHODS = ("inline_chat", "chat_view")
INSTRUCTION_TYPES = ("query", "template_plus_query", "template_only")
LOCALES = ("zh", "en")
QUERY_LOCALE_REQUIREMENTS = ("differs_from_system", "same_as_system", "none")
REFERENCE_REGIONS = (
    "historical_dialog",
    "selected_code",
    "context",
    "question",
    "error_messages",
    "general_knowledge",
)
DIFFICULTIES = ("elementary", "intermediate", "advanced", "expert")
INTENTS = (
    "code_generation",
    "code_editing",
    "code_explanation",
    "comment_generation",
    "code_repair",
    "general_qa",
)

LANGUAGE_EXTENSIONS: dict[str, str] = {
    ".py": "python",
    ".pyi": "python",
    ".go": "go",
    ".cc": "cpp",
    ".cpp": "cpp",
    ".cxx": "cpp",
    ".hpp": "cpp",
    ".hh": "cpp",
    ".java": "java",
    ".js": "javascript",
    ".mjs": "javascript",
    ".cjs": "javascript",
    ".jsx": "javascript",
    ".ts": "typescript",
    ".tsx": "typescript",
    ".rs": "rust",
    ".c": "c",
    ".h": "c",
    ".cs": "csharp",
    ".sh": "shell",
    ".bash": "shell",
}

QUICK_CHAT_TEMPLATES = ("explain code", "generate comments", "/explain", "/doc", "/fix", "/test")


class LabelError(ValueError):
    """A label value outside the closed set of its dimension."""


@dataclass(frozen=True)
class Taxonomy:
    """Closed category sets plus the two open tails (languages, templates)."""

    languages: tuple[str, ...] = (
        "python", "go", "cpp", "java", "javascript", "typescript", "rust", "c", "csharp", "shell",
    )
    extensions: Mapping[str, str] = field(default_factory=lambda: dict(LANGUAGE_EXTENSIONS))
    templates: tuple[str, ...] = QUICK_CHAT_TEMPLATES

    def categories(self, dim: Dimension) -> tuple[str, ...]:
        """Closed category set for ``dim``; dialog turns are open and return ()."""
        return {
            Dimension.CURSOR_BEHAVIOR: CURSOR_BEHAVIORS,
            Dimension.TRIGGER_METHOD: TRIGGER_METHODS,
            Dimension.INSTRUCTION_TYPE: INSTRUCTION_TYPES,
            Dimension.PROGRAMMING_LANGUAGE: self.languages,
            Dimension.SYSTEM_LOCALE: LOCALES,
            Dimension.DIALOG_TURNS: (),
            Dimension.QUERY_LOCALE_REQUIREMENT: QUERY_LOCALE_REQUIREMENTS,
            Dimension.REFERENCE_REGIONS: REFERENCE_REGIONS,
            Dimension.DIFFICULTY: DIFFICULTIES,
            Dimension.INTENT: INTENTS,
        }[dim]

    def language_for(self, path: str | None) -> str:
        if not path:
            return UNKNOWN
        suffix = Path(path).suffix.lower()
        return self.extensions.get(suffix, UNKNOWN)

    @classmethod
    def from_file(cls, path: str | Path) -> "Taxonomy":
        """Extend the defaults with ``{"extensions": {...}, "templates": [...]}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        base = cls()
        extensions = dict(base.extensions)
        extensions.update({k.lower(): v for k, v in data.get("extensions", {}).items()})
        languages = list(base.languages)
        for lang in list(extensions.values()) + list(data.get("languages", [])):
            if lang not in languages:
                languages.append(lang)
        templates = tuple(dict.fromkeys(list(base.templates) + list(data.get("templates", []))))
        return cls(languages=tuple(languages), extensions=extensions, templates=templates)


DEFAULT_TAXONOMY = Taxonomy()


def parse_label(
    dim: Dimension | str,
    value: Any,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    allow_unknown: bool = False,
) -> Any:
    """Validate one raw label value and return its canonical form.

    ``reference_regions`` yields a frozenset, ``dialog_turns`` an int, all
    others a str. Raises :class:`LabelError` for anything outside the set.
    """
    dim = Dimension(dim)
    if allow_unknown and value == UNKNOWN:
        return UNKNOWN
    if dim is Dimension.DIALOG_TURNS:
        if isinstance(value, bool):
            raise LabelError(f"dialog_turns must be an integer, got {value!r}")
        try:
            turns = int(value)
        except (TypeError, ValueError):
            raise LabelError(f"dialog_turns must be an integer, got {value!r}") from None
        if str(turns) != str(value).strip() and turns != value:
            raise LabelError(f"dialog_turns must be an integer, got {value!r}")
        if turns < 1:
            raise LabelError(f"dialog_turns must be positive, got {turns}")
        return turns
    if dim is Dimension.REFERENCE_REGIONS:
        if isinstance(value, str):
            value = [value]
        regions = frozenset(value)
        if not regions:
            raise LabelError("reference_regions must be non-empty")
        bad = sorted(r for r in regions if r not in REFERENCE_REGIONS)
        if bad:
            raise LabelError(f"unknown reference region(s) {bad}")
        return regions
    if not isinstance(value, str) or value not in taxonomy.categories(dim):
        raise LabelError(f"{value!r} is not a {dim.value} category")
    return value


def ordered_regions(regions: Iterable[str]) -> list[str]:
    regions = set(regions)
    return [r for r in REFERENCE_REGIONS if r in regions]


@dataclass(frozen=True)
class CategoryLabel:
    dimension: Dimension
    value: Any

    @classmethod
    def parse(cls, dim: Dimension | str, value: Any, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "CategoryLabel":
        dim = Dimension(dim)
        return cls(dim, parse_label(dim, value, taxonomy))


@dataclass(frozen=True)
class Labels:
    """One label per dimension. ``unknown`` is only legal on classifier output."""

    cursor_behavior: str
    trigger_method: str
    instruction_type: str
    programming_language: str
    system_locale: str
    dialog_turns: int
    query_locale_requirement: str
    reference_regions: frozenset[str]
    difficulty: str
    intent: str

    def get(self, dim: Dimension | str) -> Any:
        return getattr(self, Dimension(dim).value)

    def items(self) -> list[CategoryLabel]:
        return [CategoryLabel(d, self.get(d)) for d in DIMENSIONS]

    def with_(self, **changes: Any) -> "Labels":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for dim in DIMENSIONS:
            value = self.get(dim)
            if dim is Dimension.REFERENCE_REGIONS and value != UNKNOWN:
                value = ordered_regions(value)
            out[dim.value] = value
        return out

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY, allow_unknown: bool = False
    ) -> "Labels":
        missing = [d.value for d in DIMENSIONS if d.value not in data]
        if missing:
            raise LabelError(f"missing dimension(s) {missing}")
        return cls(**{d.value: parse_label(d, data[d.value], taxonomy, allow_unknown) for d in DIMENSIONS})


@dataclass(frozen=True, order=True)
class LineRange:
    """Inclusive 1-based line range."""

    start: int
    end: int

    @property
    def n_lines(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "LineRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def to_list(self) -> list[int]:
        return [self.start, self.end]

    @classmethod
    def from_obj(cls, obj: Any) -> "LineRange":
        if isinstance(obj, Mapping):
            return cls(int(obj["start"]), int(obj["end"]))
        start, end = obj
        return cls(int(start), int(end))


@dataclass(frozen=True)
class CursorSpec:
    """Editor state to apply: selections win over a bare cursor line."""

    selections: tuple[LineRange, ...] = ()
    cursor_line: int | None = None

    @property
    def is_empty(self) -> bool:
        return not self.selections and self.cursor_line is None

    def to_dict(self) -> dict[str, Any]:
        return {"selections": [r.to_list() for r in self.selections], "cursor_line": self.cursor_line}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> "CursorSpec":
        if not data:
            return cls()
        return cls(
            selections=tuple(LineRange.from_obj(r) for r in data.get("selections") or ()),
            cursor_line=data.get("cursor_line"),
        )


def cursor_behavior_of(file_path: str | None, selections: Iterable[LineRange]) -> str:
    """Cursor category implied by an editor snapshot."""
    ranges = list(selections)
    if not ranges:
        return "have_active_file" if file_path else "no_active_file"
    if len(ranges) == 1:
        return "select_line" if ranges[0].n_lines == 1 else "select_block"
    if all(r.n_lines == 1 for r in ranges):
        return "select_multiple_lines"
    return "select_multiple_blocks"


@dataclass(frozen=True)
class EditorSnapshot:
    active_file: str | None = None
    selections: tuple[LineRange, ...] = ()
    file_line_count: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "active_file": self.active_file,
            "selections": [r.to_list() for r in self.selections],
            "file_line_count": self.file_line_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> "EditorSnapshot":
        data = data or {}
        return cls(
            active_file=data.get("active_file"),
            selections=tuple(LineRange.from_obj(r) for r in data.get("selections") or ()),
            file_line_count=data.get("file_line_count"),
        )


@dataclass(frozen=True)
class QaInteraction:
    """One logged IDE question/answer exchange."""

    id: str
    query: str
    response: str = ""
    snapshot: EditorSnapshot = EditorSnapshot()
    trigger_method: str = "chat_view"
    prior_turn_ids: tuple[str, ...] = ()
    system_locale: str = "en"
    language_hint: str | None = None

    def problems(self) -> list[str]:
        """Schema violations; empty when the record is usable."""
        out = []
        ranges = sorted(self.snapshot.selections)
        for r in ranges:
            if r.start < 1 or r.end < r.start:
                out.append(f"selection {r.to_list()} is malformed")
            elif self.snapshot.file_line_count is not None and r.end > self.snapshot.file_line_count:
                out.append(f"selection {r.to_list()} exceeds file bounds")
        for a, b in zip(ranges, ranges[1:]):
            if a.overlaps(b):
                out.append(f"selections {a.to_list()} and {b.to_list()} overlap")
        if ranges and not self.snapshot.active_file:
            out.append("selection without an active file")
        if self.id in self.prior_turn_ids or len(set(self.prior_turn_ids)) != len(self.prior_turn_ids):
            out.append("prior-turn chain is cyclic")
        if self.trigger_method not in TRIGGER_METHODS:
            out.append(f"trigger method {self.trigger_method!r} unknown")
        if self.system_locale not in LOCALES:
            out.append(f"system locale {self.system_locale!r} unknown")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "query": self.query,
            "response": self.response,
            "snapshot": self.snapshot.to_dict(),
            "trigger_method": self.trigger_method,
            "prior_turn_ids": list(self.prior_turn_ids),
            "system_locale": self.system_locale,
            "language_hint": self.language_hint,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QaInteraction":
        return cls(
            id=str(data["id"]),
            query=data["query"],
            response=data.get("response", ""),
            snapshot=EditorSnapshot.from_dict(data.get("snapshot")),
            trigger_method=data.get("trigger_method", "chat_view"),
            prior_turn_ids=tuple(data.get("prior_turn_ids") or ()),
            system_locale=data.get("system_locale", "en"),
            language_hint=data.get("language_hint"),
        )


@dataclass(frozen=True)
class TurnSpec:
    """Per-turn instruction; ``cursor=None`` leaves the editor as it was."""

    index: int
    query: str = ""
    cursor: CursorSpec | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "query": self.query,
            "cursor": None if self.cursor is None else self.cursor.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TurnSpec":
        cursor = data.get("cursor")
        return cls(
            index=int(data["index"]),
            query=data.get("query", ""),
            cursor=None if cursor is None else CursorSpec.from_dict(cursor),
        )


@dataclass(frozen=True)
class ChatConfiguration:
    """Everything needed to replay one simulated IDE session."""

    query_id: str
    labels: Labels
    turns: tuple[TurnSpec, ...]
    repo: str | None = None
    file_path: str | None = None
    file_line_count: int | None = None
    cursor: CursorSpec = CursorSpec()
    error_messages: str | None = None
    round: int = 0

    def effective_cursors(self) -> list[CursorSpec]:
        """Editor state in force at each turn, carrying state forward."""
        state = self.cursor
        out = []
        for turn in self.turns:
            if turn.cursor is not None and not turn.cursor.is_empty:
                state = turn.cursor
            out.append(state)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "round": self.round,
            "repo": self.repo,
            "file_path": self.file_path,
            "file_line_count": self.file_line_count,
            "cursor": self.cursor.to_dict(),
            "labels": self.labels.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "error_messages": self.error_messages,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "ChatConfiguration":
        return cls(
            query_id=str(data["query_id"]),
            round=int(data.get("round", 0)),
            repo=data.get("repo"),
            file_path=data.get("file_path"),
            file_line_count=data.get("file_line_count"),
            cursor=CursorSpec.from_dict(data.get("cursor")),
            labels=Labels.from_dict(data["labels"], taxonomy),
            turns=tuple(TurnSpec.from_dict(t) for t in data.get("turns") or ()),
            error_messages=data.get("error_messages"),
        )


def validate_configuration(config: ChatConfiguration, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[str]:
    """Return every invariant violation in ``config``; an empty list means ok.

    Each message starts with the offending field name.
    """
    violations: list[str] = []
    labels = config.labels
    for dim in DIMENSIONS:
        try:
            parse_label(dim, labels.get(dim), taxonomy)
        except LabelError as exc:
            violations.append(f"labels.{dim.value}: {exc}")

    behavior = labels.cursor_behavior
    if behavior == "no_active_file":
        if config.file_path:
            violations.append("file_path: file path present with no_active_file")
        if not config.cursor.is_empty:
            violations.append("cursor: cursor state present with no_active_file")
    elif behavior in CURSOR_BEHAVIORS and not config.file_path:
        violations.append(f"file_path: missing for cursor_behavior={behavior}")

    if behavior in CURSOR_BEHAVIORS and behavior != "no_active_file":
        implied = cursor_behavior_of(config.file_path, config.cursor.selections)
        if implied != behavior:
            violations.append(f"cursor: selections imply {implied}, labelled {behavior}")

    if isinstance(labels.dialog_turns, int) and labels.dialog_turns != len(config.turns):
        violations.append(
            f"turns: dialog_turns={labels.dialog_turns} but {len(config.turns)} turn spec(s)"
        )
    if [t.index for t in config.turns] != list(range(len(config.turns))):
        violations.append("turns: indices must be 0..n-1 in order")

    specs = [config.cursor] + [t.cursor for t in config.turns if t.cursor is not None]
    for spec in specs:
        violations.extend(_range_problems(spec, config.file_line_count, bool(config.file_path)))

    regions = labels.reference_regions if isinstance(labels.reference_regions, frozenset) else frozenset()
    if "selected_code" in regions and not any(c.selections for c in config.effective_cursors()):
        violations.append("cursor: selected_code referenced but no turn has a selection")
    if "error_messages" in regions and not config.error_messages:
        violations.append("error_messages: error_messages referenced but no payload")
    if config.error_messages and "error_messages" not in regions:
        violations.append("error_messages: payload present but not referenced")
    if not config.query_id:
        violations.append("query_id: empty")
    return violations


def _range_problems(spec: CursorSpec, line_count: int | None, has_file: bool) -> list[str]:
    out = []
    if (spec.selections or spec.cursor_line is not None) and not has_file:
        out.append("cursor: editor state without an open file")
    for r in spec.selections:
        if r.start < 1 or r.end < r.start:
            out.append(f"cursor: selection {r.to_list()} malformed")
        elif line_count is not None and r.end > line_count:
            out.append(f"cursor: selection {r.to_list()} outside file of {line_count} lines")
    ranges = sorted(spec.selections)
    for a, b in zip(ranges, ranges[1:]):
        if a.overlaps(b):
            out.append(f"cursor: selections {a.to_list()} and {b.to_list()} overlap")
    if spec.cursor_line is not None:
        if spec.cursor_line < 1 or (line_count is not None and spec.cursor_line > line_count):
            out.append(f"cursor: cursor line {spec.cursor_line} outside file")
    return out


@dataclass(frozen=True)
class TrainingExample:
    """An admitted query/response pair. ``final_score`` is always 5."""

    query_id: str
    configuration: ChatConfiguration
    transcript: tuple[dict[str, str], ...]
    response: str
    endpoint_id: str
    final_score: int
    rationale: str
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.final_score != 5:
            raise ValueError(f"training examples need final score 5, got {self.final_score}")
        user_turns = sum(1 for m in self.transcript if m["role"] == "user")
        if user_turns != self.configuration.labels.dialog_turns:
            raise ValueError(
                f"transcript has {user_turns} user turn(s), configuration expects "
                f"{self.configuration.labels.dialog_turns}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "configuration": self.configuration.to_dict(),
            "transcript": [dict(m) for m in self.transcript],
            "response": self.response,
            "endpoint_id": self.endpoint_id,
            "final_score": self.final_score,
            "rationale": self.rationale,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "TrainingExample":
        return cls(
            query_id=str(data["query_id"]),
            configuration=ChatConfiguration.from_dict(data["configuration"], taxonomy),
            transcript=tuple({"role": m["role"], "content": m["content"]} for m in data["transcript"]),
            response=data["response"],
            endpoint_id=data["endpoint_id"],
            final_score=int(data["final_score"]),
            rationale=data.get("rationale", ""),
            provenance=dict(data.get("provenance") or {}),
        )
