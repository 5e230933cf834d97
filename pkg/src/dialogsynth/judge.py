"""Response judgment: model score, rule deductions, ranking and admission."""

from __future__ import annotations

import difflib
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from . import prompts
from .gateway import FINISH_ERROR, FINISH_LENGTH, CandidateResponse, Gateway
from .taxonomy import ChatConfiguration, TrainingExample
from .textutil import CJK_THRESHOLD, detect_locale, split_fences

log = logging.getLogger(__name__)

INLINE = "inline_chat"
CHAT_VIEW = "chat_view"
BOTH = "both"


@dataclass(frozen=True)
class DeductionRule:
    scene: str
    item: str
    points: int
    detector: str


DEDUCTION_RULES: tuple[DeductionRule, ...] = (
    DeductionRule(INLINE, "Text description before the code", 1, "prose_before_code"),
    DeductionRule(CHAT_VIEW, "Lack of basic text description", 1, "missing_prose"),
    DeductionRule(BOTH, "Language of response inconsistent with the instruction request and system setting.", 1, "locale_mismatch"),
    DeductionRule(BOTH, "Incomplete code markdown symbols", 1, "unbalanced_fences"),
    DeductionRule(BOTH, "Altering the original code when editing is no required", 2, "unrequested_edit"),
    DeductionRule(BOTH, "Revealing the requirements in the prompt", 2, "prompt_leak"),
    DeductionRule(BOTH, "Incomplete response, truncated in the middle of words or code", 5, "truncated"),
)


@dataclass(frozen=True)
class DetectorSettings:
    min_prose_chars: int = 20
    cjk_threshold: float = CJK_THRESHOLD
    similarity_low: float = 0.5
    similarity_high: float = 0.999
    no_edit_intents: tuple[str, ...] = ("code_explanation", "comment_generation")


@dataclass(frozen=True)
class JudgeContext:
    """What the detectors need to know about the query a response answers."""

    scene: str
    intent: str
    system_locale: str
    query_locale_requirement: str = "none"
    selected_code: str | None = None
    sentinels: tuple[str, ...] = field(default_factory=prompts.hidden_prompt_sentinels)

    @property
    def required_locale(self) -> str:
        if self.query_locale_requirement == "differs_from_system":
            return "en" if self.system_locale == "zh" else "zh"
        return self.system_locale

    @classmethod
    def from_configuration(cls, config: ChatConfiguration, selected_code: str | None = None) -> "JudgeContext":
        lb = config.labels
        return cls(
            scene=lb.trigger_method,
            intent=lb.intent,
            system_locale=lb.system_locale,
            query_locale_requirement=lb.query_locale_requirement,
            selected_code=selected_code,
        )


@dataclass(frozen=True)
class Deduction:
    item: str
    points: int

    def to_dict(self) -> dict[str, Any]:
        return {"item": self.item, "points": self.points}


@dataclass(frozen=True)
class ScoreCard:
    query_id: str
    endpoint_id: str
    base_score: int | None
    rationale: str
    deductions: tuple[Deduction, ...] = ()
    scored: bool = True

    @property
    def final_score(self) -> int | None:
        if self.base_score is None:
            return None
        return final_score(self.base_score, self.deductions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "endpoint_id": self.endpoint_id,
            "base_score": self.base_score,
            "rationale": self.rationale,
            "deductions": [d.to_dict() for d in self.deductions],
            "final_score": self.final_score,
            "scored": self.scored,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScoreCard":
        return cls(
            query_id=data["query_id"],
            endpoint_id=data["endpoint_id"],
            base_score=data.get("base_score"),
            rationale=data.get("rationale", ""),
            deductions=tuple(Deduction(d["item"], int(d["points"])) for d in data.get("deductions", [])),
            scored=bool(data.get("scored", True)),
        )


def final_score(base: int, deductions: Sequence[Deduction]) -> int:
    return max(0, min(5, base - sum(d.points for d in deductions)))


# -- detectors ---------------------------------------------------------------------

_COMMENT_PATTERNS = [
    re.compile(r'("""|\'\'\').*?\1', re.S),
    re.compile(r"/\*.*?\*/", re.S),
    re.compile(r"(?m)(?:^|\s)(?://|#(?!include|!)|--\s).*$"),
]


def normalize_code(code: str) -> str:
    """Code with comments, blank lines and whitespace runs removed."""
    for pat in _COMMENT_PATTERNS:
        code = pat.sub("", code)
    lines = (" ".join(line.split()) for line in code.splitlines())
    return "\n".join(line for line in lines if line)


def code_similarity(a: str, b: str) -> float:
    na, nb = normalize_code(a), normalize_code(b)
    if not na or not nb:
        return 0.0
    return difflib.SequenceMatcher(None, na, nb, autojunk=False).ratio()


def _prose_before_code(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    split = split_fences(resp.text)
    if split.first_fence_offset is None:
        return False
    return bool(resp.text[: split.first_fence_offset].strip())


def _missing_prose(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    prose = "".join(split_fences(resp.text).prose)
    return len("".join(prose.split())) < s.min_prose_chars


def _locale_mismatch(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    prose = "".join(split_fences(resp.text).prose)
    got = detect_locale(prose, s.cjk_threshold)
    return got is not None and got != ctx.required_locale


def _ends_inside_fence(text: str) -> bool:
    return split_fences(text).open_at_end


def _unbalanced_fences(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    # a fence left open at the end is a truncation, penalized there once
    if _ends_inside_fence(resp.text):
        return False
    return resp.text.count("```") % 2 == 1


def _unrequested_edit(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    if ctx.intent not in s.no_edit_intents or not ctx.selected_code:
        return False
    for block in split_fences(resp.text).code:
        sim = code_similarity(block, ctx.selected_code)
        if s.similarity_low <= sim <= s.similarity_high:
            return True
    return False


def _prompt_leak(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    return any(sentinel and sentinel in resp.text for sentinel in ctx.sentinels)


_TERMINAL = set(".!?。！？…:;：；)]}>`\"'”’）】」")


def _truncated(resp: CandidateResponse, ctx: JudgeContext, s: DetectorSettings) -> bool:
    if resp.finish_reason == FINISH_LENGTH or _ends_inside_fence(resp.text):
        return True
    tail = resp.text.rstrip()
    if not tail or tail.endswith("```"):
        return False
    last = tail[-1]
    return last.isalnum() and last not in _TERMINAL


DETECTORS: dict[str, Callable[[CandidateResponse, JudgeContext, DetectorSettings], bool]] = {
    "prose_before_code": _prose_before_code,
    "missing_prose": _missing_prose,
    "locale_mismatch": _locale_mismatch,
    "unbalanced_fences": _unbalanced_fences,
    "unrequested_edit": _unrequested_edit,
    "prompt_leak": _prompt_leak,
    "truncated": _truncated,
}


def apply_deductions(
    candidate: CandidateResponse,
    context: JudgeContext,
    settings: DetectorSettings = DetectorSettings(),
    rules: Sequence[DeductionRule] = DEDUCTION_RULES,
) -> list[Deduction]:
    if candidate.finish_reason == FINISH_ERROR:
        raise ValueError("cannot apply deductions to an error candidate")
    fired = []
    for rule in rules:
        if rule.scene not in (BOTH, context.scene):
            continue
        if DETECTORS[rule.detector](candidate, context, settings):
            fired.append(Deduction(rule.item, rule.points))
    return fired


# -- model scoring -----------------------------------------------------------------

_SCORE_LINE = re.compile(r"[*_]*score\s*[:：]\s*\**\s*(-?\d+)(?:\s*/\s*5)?\s*\**\s*$", re.I | re.M)


def parse_score(reply: str) -> tuple[int, str] | None:
    """``(score, rationale)`` from a reply ending in ``Score: N``; None if unusable."""
    matches = list(_SCORE_LINE.finditer(reply or ""))
    if not matches:
        return None
    m = matches[-1]
    score = int(m.group(1))
    if not 1 <= score <= 5:
        return None
    rationale = reply[: m.start()].strip() or "no rationale given"
    return score, rationale


class JudgeUnavailable(RuntimeError):
    pass


def score_response(
    transcript: Sequence[Mapping[str, str]],
    response: str,
    gateway: Gateway,
    attrs: Mapping[str, Any] | None = None,
) -> tuple[int, str]:
    """Base score 1..5 and the judge's rationale.

    Raises :class:`JudgeUnavailable` when the judge endpoint errors.
    """
    messages = prompts.score_messages(transcript, response, attrs or {})
    reply = gateway.complete(messages)
    if not reply.ok:
        raise JudgeUnavailable(reply.error or "judge error")
    parsed = parse_score(reply.text)
    if parsed is not None:
        return parsed
    retry = messages + [
        {"role": "assistant", "content": reply.text},
        {"role": "user", "content": prompts.SCORE_REPAIR},
    ]
    second = gateway.complete(retry)
    if not second.ok:
        raise JudgeUnavailable(second.error or "judge error")
    parsed = parse_score(second.text)
    return parsed if parsed is not None else (1, "unparseable")


_RANKING = re.compile(r"ranking\s*[:：]\s*(.+)$", re.I | re.M)


def parse_ranking(reply: str, n: int) -> list[list[int]] | None:
    """Ranking tiers (1-based answer numbers) or None if malformed."""
    matches = list(_RANKING.finditer(reply or ""))
    if not matches:
        return None
    tiers = []
    for tier in matches[-1].group(1).split(">"):
        nums = re.findall(r"\d+", tier)
        if not nums:
            return None
        tiers.append([int(x) for x in nums])
    flat = [x for t in tiers for x in t]
    if not flat or any(not 1 <= x <= n for x in flat) or len(set(flat)) != len(flat):
        return None
    return tiers


def compare_responses(
    transcript: Sequence[Mapping[str, str]],
    candidates: Sequence[CandidateResponse],
    gateway: Gateway,
    attrs: Mapping[str, Any] | None = None,
) -> int:
    """Index of the best candidate. Ties and failures go to the earliest pool position."""
    if len(candidates) < 2:
        raise ValueError("comparison needs at least two candidates")
    messages = prompts.compare_messages(transcript, [c.text for c in candidates], attrs or {})
    reply = gateway.complete(messages)
    if not reply.ok:
        log.warning("comparison failed (%s); keeping pool order", reply.error)
        return 0
    tiers = parse_ranking(reply.text, len(candidates))
    if tiers is None:
        return 0
    return min(tiers[0]) - 1


@dataclass(frozen=True)
class Requeue:
    query_id: str
    reason: str


def select_training_example(
    session_config: ChatConfiguration,
    transcript: Sequence[Mapping[str, str]],
    candidates: Sequence[CandidateResponse],
    scorecards: Sequence[ScoreCard],
    gateway: Gateway,
    provenance: Mapping[str, Any] | None = None,
) -> TrainingExample | Requeue:
    """Admit the single best 5-point candidate, or signal a requeue."""
    fives = [
        (cand, card) for cand, card in zip(candidates, scorecards)
        if card.scored and card.final_score == 5
    ]
    if not fives:
        return Requeue(session_config.query_id, "no 5-point candidate")
    if len(fives) == 1:
        cand, card = fives[0]
    else:
        winner = compare_responses(transcript, [c for c, _ in fives], gateway, {"intent": session_config.labels.intent})
        cand, card = fives[winner]
    return TrainingExample(
        query_id=session_config.query_id,
        configuration=session_config,
        transcript=tuple(dict(m) for m in transcript),
        response=cand.text,
        endpoint_id=cand.endpoint_id,
        final_score=5,
        rationale=card.rationale,
        provenance=dict(provenance or {}, n_five_point=len(fives)),
    )


def judge_candidates(
    query_id: str,
    transcript: Sequence[Mapping[str, str]],
    candidates: Sequence[CandidateResponse],
    context: JudgeContext,
    gateway: Gateway,
    settings: DetectorSettings = DetectorSettings(),
) -> list[ScoreCard]:
    """Scorecards in candidate order. Error candidates are never scored."""
    attrs = {"intent": context.intent, "scene": context.scene}
    cards = []
    for cand in candidates:
        if not cand.ok:
            cards.append(ScoreCard(query_id, cand.endpoint_id, None, f"not scored: {cand.error}", scored=False))
            continue
        base, rationale = score_response(transcript, cand.text, gateway, attrs)
        cards.append(ScoreCard(query_id, cand.endpoint_id, base, rationale, tuple(apply_deductions(cand, context, settings))))
    return cards


def deduction_table() -> list[dict[str, Any]]:
    """The rule table as plain records, for audit export."""
    return [{"scene": r.scene, "item": r.item, "points": r.points, "detector": r.detector} for r in DEDUCTION_RULES]
