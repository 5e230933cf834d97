"""Plan items to concrete chat configurations.

For each planned query: place it in a repository file, synthesize the query
text turn by turn through the helper model, and gate every query through the
quality filter. Items whose queries keep failing are dropped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass
from typing import Any, Sequence

from . import prompts
from .analyst import instruction_type_of, query_locale_requirement_of
from .corpus import (
    RepoCorpusIndex,
    context_window,
    read_lines,
    sample_repository,
    selected_text,
    slice_lines,
)
from .gateway import Gateway, SamplingParams
from .taxonomy import (
    DEFAULT_TAXONOMY,
    ChatConfiguration,
    Labels,
    Taxonomy,
    TurnSpec,
    validate_configuration,
)
from .textutil import requested_locale

log = logging.getLogger(__name__)

MAX_QUERY_ATTEMPTS = 3


class QueryGenerationError(RuntimeError):
    pass


def derive_seed(*parts: Any) -> int:
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


@dataclass(frozen=True)
class QueryVerdict:
    passed: bool
    rationale: str

    def __post_init__(self) -> None:
        if not self.passed and not self.rationale:
            raise ValueError("a failing verdict needs a rationale")


# Template per intent for quick-chat instruction types.
INTENT_TEMPLATES = {
    "code_explanation": "explain code",
    "comment_generation": "generate comments",
    "code_repair": "/fix",
    "code_generation": "/test",
    "code_editing": "/fix",
    "general_qa": "/explain",
}

_IMPORT_LINES = {
    "python": "import {m}",
    "go": 'import "{m}"',
    "rust": "use {m}::Rng;",
    "java": "import {m}.Util;",
    "javascript": "const {m} = require('{m}');",
    "typescript": "import * as {m} from '{m}';",
    "cpp": "#include <{m}.h>",
    "c": "#include <{m}.h>",
    "csharp": "using {M};",
    "shell": "{m} --version",
}
_ERRORS = {
    "python": "ModuleNotFoundError: No module named '{m}'",
    "go": 'cannot find package "{m}" in any of GOROOT or GOPATH',
    "rust": "unresolved import '{m}'; use of undeclared crate or module '{m}'",
    "java": "error: package {m} does not exist",
    "javascript": "Error: Cannot find module '{m}'",
    "typescript": "error TS2307: Cannot find module '{m}' or its corresponding type declarations.",
    "cpp": "fatal error: {m}.h: No such file or directory",
    "c": "fatal error: {m}.h: No such file or directory",
    "csharp": "error CS0246: The type or namespace name '{M}' could not be found",
    "shell": "{m}: command not found",
}
_MODULES = ("rand", "requests", "yaml", "lodash", "serde", "numpy", "gson", "boost")


def synthesize_error_messages(language: str, rng: random.Random) -> str:
    mod = _MODULES[rng.randrange(len(_MODULES))]
    code = _IMPORT_LINES.get(language, "import {m}").format(m=mod, M=mod.capitalize())
    err = _ERRORS.get(language, "error: cannot resolve '{m}'").format(m=mod, M=mod.capitalize())
    return f"Code: {code}\nError Messages: {err}"


def query_attributes(labels: Labels, turn: int) -> dict[str, Any]:
    return {
        "intent": labels.intent,
        "difficulty": labels.difficulty,
        "reference_regions": sorted(labels.reference_regions),
        "programming_language": labels.programming_language,
        "system_locale": labels.system_locale,
        "query_locale_requirement": labels.query_locale_requirement,
        "trigger_method": labels.trigger_method,
        "cursor_behavior": labels.cursor_behavior,
        "dialog_turns": labels.dialog_turns,
        "turn": turn,
    }


def generate_query(
    labels: Labels,
    context: str | None,
    gateway: Gateway,
    seed: int,
    turn: int = 0,
    prior_queries: Sequence[str] = (),
) -> str:
    """Model-written query text for one turn; later turns see the earlier queries."""
    messages = prompts.generate_query_messages(query_attributes(labels, turn), context, prior_queries)
    for attempt in range(2):
        reply = gateway.complete(messages, SamplingParams(seed=derive_seed(seed, "gen", attempt)))
        text = reply.text.strip().strip('"').strip() if reply.ok else ""
        if text:
            return text
    raise QueryGenerationError("empty query from model after retry")


def compose_query(body: str, labels: Labels, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> str:
    """Realize instruction type and locale requirement on a first-turn query."""
    template = INTENT_TEMPLATES.get(labels.intent, taxonomy.templates[0])
    if template not in taxonomy.templates:
        template = taxonomy.templates[0]
    if labels.instruction_type == "template_only":
        return template
    query = body
    if labels.query_locale_requirement != "none":
        target = labels.system_locale
        if labels.query_locale_requirement == "differs_from_system":
            target = "en" if labels.system_locale == "zh" else "zh"
        if requested_locale(query) != target:
            query = f"{query} {prompts.LOCALE_DIRECTIVES[target]}"
    if labels.instruction_type == "template_plus_query":
        query = f"{template} {query}"
    return query


def rule_mismatches(query: str, labels: Labels, taxonomy: Taxonomy, first_turn: bool) -> list[str]:
    """Rule-dimension labels the query text would not reproduce."""
    out = []
    if first_turn:
        if instruction_type_of(query, taxonomy.templates) != labels.instruction_type:
            out.append("instruction_type")
        if query_locale_requirement_of(query, labels.system_locale) != labels.query_locale_requirement:
            out.append("query_locale_requirement")
    else:
        if instruction_type_of(query, taxonomy.templates) != "query":
            out.append("instruction_type")
        if requested_locale(query) is not None:
            out.append("query_locale_requirement")
    return out


def parse_verdict(reply: str) -> QueryVerdict | None:
    try:
        start, end = reply.index("{"), reply.rindex("}") + 1
        data = json.loads(reply[start:end])
    except (ValueError, json.JSONDecodeError):
        return None
    if not isinstance(data, dict) or not isinstance(data.get("pass"), bool):
        return None
    rationale = str(data.get("rationale") or "").strip()
    if not data["pass"] and not rationale:
        rationale = "rejected without rationale"
    return QueryVerdict(data["pass"], rationale)


def filter_query(query: str, labels: Labels, gateway: Gateway, seed: int = 0) -> QueryVerdict:
    messages = prompts.filter_query_messages(query, query_attributes(labels, 0))
    for attempt in range(2):
        reply = gateway.complete(messages, SamplingParams(seed=derive_seed(seed, "filter", attempt)))
        if not reply.ok:
            continue
        verdict = parse_verdict(reply.text)
        if verdict is not None:
            return verdict
    return QueryVerdict(False, "unparseable")


@dataclass
class ConfigOutcome:
    config: ChatConfiguration | None
    attempts: int
    drop_reason: str | None = None


def build_configuration(
    query_id: str,
    labels: Labels,
    index: RepoCorpusIndex,
    gateway: Gateway,
    seed: int,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    round: int = 0,
    max_attempts: int = MAX_QUERY_ATTEMPTS,
) -> ConfigOutcome:
    """Turn one planned label set into a validated configuration, or drop it."""
    rng = random.Random(derive_seed(seed, query_id, round, "repo"))
    choice = sample_repository(labels.programming_language, labels.cursor_behavior, index, rng)
    context = None
    if choice.file_path:
        lines = read_lines(index.path_of(choice.repo, choice.file_path))
        span = context_window(lines, choice.cursor)
        selected = selected_text(lines, choice.cursor)
        context = slice_lines(lines, *span) if span else None
        if selected:
            context = f"{context}\n\n# selected:\n{selected}"
    errors = None
    if "error_messages" in labels.reference_regions:
        errors = synthesize_error_messages(labels.programming_language, rng)

    queries: list[str] = []
    attempts = 0
    for turn in range(labels.dialog_turns):
        accepted = None
        for attempt in range(max_attempts):
            attempts += 1
            turn_seed = derive_seed(seed, query_id, round, turn, attempt)
            if turn == 0 and labels.instruction_type == "template_only":
                query = compose_query("", labels, taxonomy)
            else:
                try:
                    body = generate_query(labels, context, gateway, turn_seed, turn, queries)
                except QueryGenerationError as exc:
                    return ConfigOutcome(None, attempts, f"turn {turn}: {exc}")
                query = compose_query(body, labels, taxonomy) if turn == 0 else body
            bad = rule_mismatches(query, labels, taxonomy, first_turn=turn == 0)
            if bad:
                log.debug("%s turn %d attempt %d: query contradicts %s", query_id, turn, attempt, bad)
                continue
            verdict = filter_query(query, labels, gateway, turn_seed)
            if verdict.passed:
                accepted = query
                break
            log.debug("%s turn %d attempt %d filtered: %s", query_id, turn, attempt, verdict.rationale)
        if accepted is None:
            reason = f"turn {turn}: query rejected {max_attempts} times"
            log.info("dropping %s: %s", query_id, reason)
            return ConfigOutcome(None, attempts, reason)
        queries.append(accepted)

    turns = tuple(TurnSpec(index=i, query=q, cursor=None) for i, q in enumerate(queries))
    config = ChatConfiguration(
        query_id=query_id,
        labels=labels,
        turns=turns,
        repo=choice.repo,
        file_path=choice.file_path,
        file_line_count=choice.line_count,
        cursor=choice.cursor,
        error_messages=errors,
        round=round,
    )
    problems = validate_configuration(config, taxonomy)
    if problems:
        raise AssertionError(f"{query_id}: generated configuration invalid: {problems}")
    return ConfigOutcome(config, attempts)
