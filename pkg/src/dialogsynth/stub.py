"""Deterministic offline stand-in for chat-completion endpoints.

Every reply is a pure function of ``(messages, params.seed, stub options,
endpoint id)``. Stub options (the ``stub`` mapping of an endpoint):

``mode``
    ``synthetic`` (default): recognizes this package's prompt templates and
    produces plausible structured replies. ``echo``: returns the last user
    message. ``canned``: returns ``default_reply``.
``replies``
    ``{prompt_hash: text}``; checked first. See :func:`prompt_hash`.
``task_replies``
    ``{task: text | [texts]}``; a list is indexed by the prompt hash.
``fail``
    ``true`` to fail every call, or a list of task names to fail.
``fail_after_user_turns``
    fail once the prompt carries more than this many user messages.
``perfect_rate``, ``defect_rate``, ``filter_pass_rate``
    knobs for synthetic judging, answer defects and query filtering.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any, Mapping, Sequence

from . import prompts
from .gateway import (
    FINISH_COMPLETE,
    FINISH_LENGTH,
    CandidateResponse,
    ModelEndpoint,
    SamplingParams,
    check_messages,
)
from .textutil import requested_locale

DEFAULTS: dict[str, Any] = {
    "mode": "synthetic",
    "perfect_rate": 0.75,
    "defect_rate": 0.1,
    "filter_pass_rate": 0.9,
    "default_reply": "This is a stub reply.",
}


def prompt_hash(messages: Sequence[Mapping[str, str]]) -> str:
    canon = json.dumps([[m["role"], m["content"]] for m in messages], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class StubChatClient:
    def __init__(self, endpoint: ModelEndpoint | None = None, **options: Any):
        self.endpoint = endpoint or ModelEndpoint(id="stub", base_url="stub://")
        self.endpoint_id = self.endpoint.id
        self.options = {**DEFAULTS, **dict(self.endpoint.stub or {}), **options}

    def _unit(self, key: str, *salt: Any) -> float:
        digest = hashlib.sha256("|".join([self.endpoint_id, key, *map(str, salt)]).encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2**64

    def _pick(self, seq: Sequence[Any], key: str, *salt: Any) -> Any:
        return seq[int(self._unit(key, *salt) * len(seq))]

    def complete(self, messages: Sequence[Mapping[str, str]], params: SamplingParams | None = None) -> CandidateResponse:
        check_messages(messages)
        p = self.endpoint.resolve(params)
        key = prompt_hash(messages) + f"|{p.seed}"
        task = prompts.identify_task(messages)
        opts = self.options

        fail = opts.get("fail")
        if fail is True or (isinstance(fail, (list, tuple)) and task in fail):
            return CandidateResponse.failed(self.endpoint_id, "stub: configured failure")
        limit = opts.get("fail_after_user_turns")
        if limit is not None and sum(m["role"] == "user" for m in messages) > limit:
            return CandidateResponse.failed(self.endpoint_id, "stub: configured failure after turn limit")

        replies = opts.get("replies") or {}
        task_replies = opts.get("task_replies") or {}
        ph = prompt_hash(messages)
        if ph in replies:
            text = replies[ph]
        elif task in task_replies:
            canned = task_replies[task]
            text = canned if isinstance(canned, str) else self._pick(canned, key, "canned")
        elif opts["mode"] == "echo":
            text = next(m["content"] for m in reversed(messages) if m["role"] == "user") if any(
                m["role"] == "user" for m in messages) else messages[-1]["content"]
        elif opts["mode"] == "canned" or task is None:
            text = opts["default_reply"]
        else:
            text = getattr(self, f"_{task}")(messages, key)

        if not text:
            return CandidateResponse.failed(self.endpoint_id, "stub: empty reply")
        words = text.split(" ")
        prompt_tokens = sum(len(m["content"].split()) for m in messages)
        if p.max_tokens is not None and len(words) > p.max_tokens:
            text = " ".join(words[: p.max_tokens])
            return CandidateResponse(self.endpoint_id, text, FINISH_LENGTH,
                                     prompt_tokens=prompt_tokens, completion_tokens=p.max_tokens)
        return CandidateResponse(self.endpoint_id, text, FINISH_COMPLETE,
                                 prompt_tokens=prompt_tokens, completion_tokens=len(words))

    # -- synthetic tasks ---------------------------------------------------

    def _classify(self, messages, key):
        attrs = prompts.attributes_of(messages)
        query = attrs.get("query", "")
        intent = guess_intent(query)
        regions = []
        if attrs.get("has_history") and re.search(r"more detail|continue|previous|above|继续|详细|刚才", query, re.I):
            regions.append("historical_dialog")
        # a query can only lean on selected code when there is a selection
        if attrs.get("has_selection"):
            regions.append("selected_code")
        if intent == "code_repair" and re.search(r"error|exception|报错|错误", query, re.I):
            regions.append("error_messages")
        if not regions:
            regions.append("general_knowledge" if intent in ("code_generation", "general_qa") else "question")
        n = len(query.split())
        difficulty = "elementary" if n < 8 else "intermediate" if n < 16 else "advanced" if n < 30 else "expert"
        return json.dumps({"reference_regions": regions, "difficulty": difficulty, "intent": intent})

    def _generate_query(self, messages, key):
        attrs = prompts.attributes_of(messages)
        locale = attrs.get("system_locale", "en")
        lang = attrs.get("programming_language") or "python"
        if attrs.get("turn", 0) > 0:
            return self._pick(FOLLOW_UPS[locale], key, "follow")
        bank = QUERY_BANK[locale].get(attrs.get("intent", "general_qa"), QUERY_BANK[locale]["general_qa"])
        topic = self._pick(TOPICS, key, "topic")
        return self._pick(bank, key, "q").format(lang=lang, topic=topic)

    def _filter_query(self, messages, key):
        ok = self._unit(key, "filter") < float(self.options["filter_pass_rate"])
        rationale = "The question is specific and answerable." if ok else "The question is too vague to answer."
        return json.dumps({"pass": ok, "rationale": rationale})

    def _score(self, messages, key):
        if self._unit(key, "score") < float(self.options["perfect_rate"]):
            return "The answer follows the instruction and the code is correct.\nScore: 5"
        score = self._pick([2, 3, 4, 4], key, "low")
        return f"The answer is partially helpful but misses details.\nScore: {score}"

    def _compare(self, messages, key):
        n = int(prompts.attributes_of(messages).get("n_answers", 2))
        order = sorted(range(1, n + 1), key=lambda i: self._unit(key, "rank", i))
        return "The first ranked answer is the most complete.\nRanking: " + " > ".join(map(str, order))

    def _answer(self, messages, key):
        system = messages[0]["content"] if messages[0]["role"] == "system" else ""
        inline = system.startswith("You are a coding assistant answering from the editor's inline chat.")
        query = next((m["content"] for m in reversed(messages) if m["role"] == "user"), "")
        asked = [requested_locale(m["content"]) for m in messages if m["role"] == "user"]
        asked = [a for a in asked if a]
        locale = asked[-1] if asked else ("zh" if "请使用中文回答" in system else "en")
        lang_match = re.search(r"```(\w+)", system)
        lang = lang_match.group(1) if lang_match else "python"
        selected = _section(system, "Selected code")
        intent = guess_intent(query)
        if selected and intent in ("comment_generation",):
            code = _comment_lines(selected, lang)
        elif selected and intent == "code_explanation":
            code = None
        else:
            code = SNIPPETS.get(lang, SNIPPETS["python"])
        prose = PROSE[locale][intent]
        outro = self._pick(PROSE_OUTRO[locale], key, "outro")

        defect = None
        if self._unit(key, "defect") < float(self.options["defect_rate"]):
            defect = self._pick(["prose_first", "no_prose", "open_fence", "leak", "mid_word", "locale"], key, "kind")
        if defect == "locale":
            other = "zh" if locale == "en" else "en"
            prose, outro = PROSE[other][intent], PROSE_OUTRO[other][0]

        block = prompts.fence(code, lang) if code else None
        if inline:
            parts = [block, outro] if block else [prose, outro]
            if defect == "prose_first" and block:
                parts = [prose, block]
        else:
            parts = [prose, block, outro] if block else [prose, outro]
            if defect == "no_prose" and block:
                parts = [block]
        text = "\n\n".join(parts)
        if defect == "open_fence" and block:
            text = text[: text.rfind("```")].rstrip() + "\n"
            text = text.rstrip()
        elif defect == "leak":
            text += "\n\n" + prompts.COMMON_RULES[1]
        elif defect == "mid_word":
            text = text.rstrip(".。!") + " and then the"
        return text


def _section(system: str, title: str) -> str | None:
    m = re.search(rf"^{re.escape(title)}[^\n]*:\n```[^\n]*\n(.*?)\n```", system, re.S | re.M)
    return m.group(1) if m else None


_COMMENT_PREFIX = {"python": "#", "shell": "#"}


def _comment_lines(code: str, lang: str) -> str:
    mark = _COMMENT_PREFIX.get(lang, "//")
    out = []
    for line in code.splitlines():
        indent = line[: len(line) - len(line.lstrip())]
        if line.strip():
            out.append(f"{indent}{mark} step")
        out.append(line)
    return "\n".join(out)


_INTENT_RULES = [
    ("comment_generation", r"\bcomment|docstring|注释|/doc\b"),
    ("code_repair", r"\bfix|bug|error|fail|exception|修复|报错|错误|/fix\b"),
    ("code_explanation", r"\bexplain|what does|meaning|significance|detail|解释|含义|/explain\b"),
    ("code_editing", r"\brefactor|rename|optimi[sz]e|add new|modify|change|重构|修改|优化"),
    ("code_generation", r"\bwrite|generate|implement|create|continue|/test\b|编写|生成|实现|继续"),
]


def guess_intent(query: str) -> str:
    for intent, pattern in _INTENT_RULES:
        if re.search(pattern, query, re.I):
            return intent
    return "general_qa"


TOPICS = ("binary search", "LRU cache", "bubble sort", "CSV parser", "retry helper", "word counter")

QUERY_BANK = {
    "en": {
        "code_generation": ["Write a {topic} in {lang}.", "Generate a {lang} function that implements a {topic}."],
        "code_editing": ["Please refactor this code to optimize it for best performance.",
                         "Rename the variables in this code so they are more descriptive."],
        "code_explanation": ["Can you explain what this code does step by step?",
                             "What is the significance of this function in the surrounding module?"],
        "comment_generation": ["Generate comments for the currently selected code.",
                               "Add comments that describe each step of this code."],
        "code_repair": ["Please fix the code.", "This code throws an error at runtime, what's the problem?"],
        "general_qa": ["How does a {topic} work in {lang}?", "Which {lang} libraries are commonly used for a {topic}?"],
    },
    "zh": {
        "code_generation": ["用{lang}编写一个{topic}。", "生成一个实现{topic}的{lang}函数。"],
        "code_editing": ["请重构这段代码以优化性能。", "请修改这段代码，让变量名更清晰。"],
        "code_explanation": ["请解释这段代码的作用。", "这个函数在模块中的含义是什么？"],
        "comment_generation": ["为当前选中的代码生成注释。", "给这段代码的每一步添加注释。"],
        "code_repair": ["请修复这段代码。", "这段代码运行时报错，问题出在哪里？"],
        "general_qa": ["{lang}里的{topic}是怎么工作的？", "{lang}中实现{topic}常用哪些库？"],
    },
}

FOLLOW_UPS = {
    "en": ["Can you go into more detail?", "Continue to generate subsequent code.", "Can you explain the previous answer in more detail?"],
    "zh": ["能再详细解释一下吗？", "继续生成后续代码。", "请更详细地解释刚才的回答。"],
}

SNIPPETS = {
    "python": "def solve(items):\n    return sorted(items)",
    "go": "func solve(items []int) []int {\n\tsort.Ints(items)\n\treturn items\n}",
    "rust": "fn solve(mut items: Vec<i32>) -> Vec<i32> {\n    items.sort();\n    items\n}",
    "java": "static int[] solve(int[] items) {\n    Arrays.sort(items);\n    return items;\n}",
    "javascript": "function solve(items) {\n  return [...items].sort((a, b) => a - b);\n}",
    "typescript": "function solve(items: number[]): number[] {\n  return [...items].sort((a, b) => a - b);\n}",
    "cpp": "std::vector<int> solve(std::vector<int> items) {\n    std::sort(items.begin(), items.end());\n    return items;\n}",
    "c": "void solve(int *items, size_t n) {\n    qsort(items, n, sizeof(int), cmp);\n}",
    "csharp": "static int[] Solve(int[] items) {\n    Array.Sort(items);\n    return items;\n}",
    "shell": "solve() {\n  sort -n \"$1\"\n}",
}

_EN = "Here is a solution that keeps the behaviour clear and easy to test."
_ZH = "下面给出一个清晰且易于测试的实现方案，并说明其关键步骤。"
PROSE = {
    "en": {
        "code_generation": _EN,
        "code_editing": "The updated version below keeps the interface and improves the structure.",
        "code_explanation": "This code receives its input, validates it, and returns the transformed result to the caller.",
        "comment_generation": "The comments below describe what each step of the selected code does.",
        "code_repair": "The failure comes from a missing dependency; the corrected code is below.",
        "general_qa": "The usual approach is to split the work into small, well tested functions.",
    },
    "zh": {
        "code_generation": _ZH,
        "code_editing": "下面的版本保持接口不变，同时改进了代码结构。",
        "code_explanation": "这段代码接收输入，先进行校验，然后把转换后的结果返回给调用方。",
        "comment_generation": "下面的注释说明了所选代码中每一步的作用。",
        "code_repair": "问题来自缺失的依赖，修复后的代码如下。",
        "general_qa": "通常的做法是把工作拆分成若干个小而且经过测试的函数。",
    },
}
PROSE_OUTRO = {
    "en": (
        "Let me know if you would like further changes.",
        "Happy to adjust it if your inputs differ.",
        "Run it against a few edge cases before merging.",
        "This keeps the behavior unchanged for valid input.",
    ),
    "zh": (
        "如果需要进一步修改，请告诉我。",
        "如果输入格式不同，我可以再调整。",
        "合并前建议用几个边界用例验证一下。",
        "对合法输入，行为保持不变。",
    ),
}
