"""Small synthetic inputs for offline runs: a code corpus and interaction logs.

Each synthetic interaction is built from known attribute values, so the
returned ground truth is independent of the rule classifier.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .taxonomy import (
    CURSOR_BEHAVIORS,
    DEFAULT_TAXONOMY,
    EditorSnapshot,
    LineRange,
    SELECTION_BEHAVIORS,
    QaInteraction,
    Taxonomy,
)


EXTENSION_OF = {
    "python": ".py", "go": ".go", "cpp": ".cpp", "java": ".java", "javascript": ".js",
    "typescript": ".ts", "rust": ".rs", "c": ".c", "csharp": ".cs", "shell": ".sh",
}

_FUNC = {
    "python": "def {name}(values):\n    total = 0\n    for v in values:\n        total += v * {k}\n    return total\n",
    "go": "func {name}(values []int) int {{\n\ttotal := 0\n\tfor _, v := range values {{\n\t\ttotal += v * {k}\n\t}}\n\treturn total\n}}\n",
    "cpp": "int {name}(const std::vector<int>& values) {{\n    int total = 0;\n    for (int v : values) {{\n        total += v * {k};\n    }}\n    return total;\n}}\n",
    "java": "    static int {name}(int[] values) {{\n        int total = 0;\n        for (int v : values) {{\n            total += v * {k};\n        }}\n        return total;\n    }}\n",
    "javascript": "function {name}(values) {{\n  let total = 0;\n  for (const v of values) {{\n    total += v * {k};\n  }}\n  return total;\n}}\n",
    "typescript": "export function {name}(values: number[]): number {{\n  let total = 0;\n  for (const v of values) {{\n    total += v * {k};\n  }}\n  return total;\n}}\n",
    "rust": "pub fn {name}(values: &[i64]) -> i64 {{\n    let mut total = 0;\n    for v in values {{\n        total += v * {k};\n    }}\n    total\n}}\n",
    "c": "int {name}(const int *values, int n) {{\n    int total = 0;\n    for (int i = 0; i < n; i++) {{\n        total += values[i] * {k};\n    }}\n    return total;\n}}\n",
    "csharp": "    public static int {name}(int[] values)\n    {{\n        int total = 0;\n        foreach (var v in values)\n        {{\n            total += v * {k};\n        }}\n        return total;\n    }}\n",
    "shell": "{name}() {{\n  local total=0\n  for v in \"$@\"; do\n    total=$((total + v * {k}))\n  done\n  echo \"$total\"\n}}\n",
}
_HEAD = {
    "python": "import math\n\n", "go": "package main\n\n", "cpp": "#include <vector>\n\n",
    "java": "public class Util {\n", "javascript": "'use strict';\n\n", "typescript": "",
    "rust": "", "c": "#include <stdio.h>\n\n", "csharp": "public static class Util\n{\n",
    "shell": "#!/usr/bin/env bash\nset -eu\n\n",
}
_TAIL = {"java": "}\n", "csharp": "}\n"}


def source_file(language: str, n_funcs: int, seed: int) -> str:
    rng = random.Random(seed)
    body = "\n".join(
        _FUNC[language].format(name=f"scale_{seed}_{i}", k=rng.randint(2, 9)) for i in range(n_funcs)
    )
    return _HEAD[language] + body + _TAIL.get(language, "")


def write_fixture_corpus(
    root: str | Path,
    languages: tuple[str, ...] = tuple(EXTENSION_OF),
    repos_per_language: int = 2,
    files_per_repo: int = 2,
    funcs_per_file: int = 10,
) -> Path:
    """One directory per repository under ``root``; every file has 60+ lines."""
    root = Path(root)
    for li, lang in enumerate(languages):
        for r in range(repos_per_language):
            repo = root / f"{lang}-repo{r}"
            (repo / "src").mkdir(parents=True, exist_ok=True)
            for f in range(files_per_repo):
                seed = li * 1000 + r * 100 + f
                path = repo / "src" / f"module{f}{EXTENSION_OF[lang]}"
                path.write_text(source_file(lang, funcs_per_file, seed), encoding="utf-8")
            (repo / "README.md").write_text(f"# {lang} fixture {r}\n", encoding="utf-8")
    return root


_QUERIES_EN = (
    "Why does this loop return the wrong total for negative values?",
    "Can you rewrite this function to avoid the explicit loop?",
    "What does this code do?",
    "Add a docstring describing the parameters.",
    "Write a unit test for this function.",
    "How do I read a file line by line?",
)
_QUERIES_ZH = (
    "这个循环为什么在负数时结果不对？",
    "能把这个函数改写成不用显式循环的形式吗？",
    "这段代码是做什么的？",
    "帮我给这个函数加上注释。",
    "如何逐行读取文件？",
)
_DIRECTIVE = {"en": "Please answer in English.", "zh": "请用中文回答。"}


@dataclass(frozen=True)
class SyntheticInteraction:
    interaction: QaInteraction
    truth: dict[str, Any]


def _snapshot(behavior: str, language: str, rng: random.Random) -> EditorSnapshot:
    if behavior == "no_active_file":
        return EditorSnapshot()
    n = rng.randint(60, 200)
    path = f"src/mod{rng.randint(0, 9)}{EXTENSION_OF[language]}"
    if behavior == "have_active_file":
        sel: tuple[LineRange, ...] = ()
    elif behavior == "select_line":
        a = rng.randint(1, n)
        sel = (LineRange(a, a),)
    elif behavior == "select_block":
        a = rng.randint(1, n - 10)
        sel = (LineRange(a, a + rng.randint(2, 9)),)
    elif behavior == "select_multiple_lines":
        a = rng.randint(1, n // 2)
        sel = (LineRange(a, a), LineRange(a + 5, a + 5))
    else:
        a = rng.randint(1, n // 2 - 10)
        sel = (LineRange(a, a + 3), LineRange(a + 10, a + 14))
    return EditorSnapshot(active_file=path, selections=sel, file_line_count=n)


def synthetic_logs(n: int, seed: int = 0, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[SyntheticInteraction]:
    """``n`` interactions with their rule-dimension ground truth.

    Interactions form chains of 1 to 3 turns; a follow-up lists the ids of all
    earlier turns of its chain.
    """
    rng = random.Random(seed)
    out: list[SyntheticInteraction] = []
    chain: list[str] = []
    for i in range(n):
        if chain and rng.random() < 0.35 and len(chain) < 3:
            prior = tuple(chain)
        else:
            chain = []
            prior = ()
        behavior = rng.choice(CURSOR_BEHAVIORS)
        language = rng.choice(taxonomy.languages)
        trigger = rng.choice(("inline_chat", "chat_view")) if behavior != "no_active_file" else "chat_view"
        locale = rng.choice(("en", "zh"))
        # editor templates act on a selection, so they never appear without one
        if behavior in SELECTION_BEHAVIORS:
            itype = rng.choices(("query", "template_plus_query", "template_only"), (6, 2, 2))[0]
        else:
            itype = "query"
        body = rng.choice(_QUERIES_EN if locale == "en" else _QUERIES_ZH)
        template = rng.choice(taxonomy.templates)
        if itype == "template_only":
            query, req = template, "none"
        else:
            query = body if itype == "query" else f"{template} {body}"
            req = rng.choices(("none", "same_as_system", "differs_from_system"), (6, 2, 2))[0]
            if req != "none":
                want = locale if req == "same_as_system" else ("zh" if locale == "en" else "en")
                query = f"{query} {_DIRECTIVE[want]}"
        snap = _snapshot(behavior, language, rng)
        inter = QaInteraction(
            id=f"log{seed}-{i:05d}",
            query=query,
            response="",
            snapshot=snap,
            trigger_method=trigger,
            prior_turn_ids=prior,
            system_locale=locale,
            language_hint=language if behavior == "no_active_file" else None,
        )
        truth = {
            "cursor_behavior": behavior,
            "trigger_method": trigger,
            "instruction_type": itype,
            "programming_language": language,
            "system_locale": locale,
            "dialog_turns": len(prior) + 1,
            "query_locale_requirement": req,
        }
        out.append(SyntheticInteraction(inter, truth))
        chain.append(inter.id)
    return out
