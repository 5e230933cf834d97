"""Small text heuristics shared by the classifier, the judge and the stub."""

from __future__ import annotations

import re
from dataclasses import dataclass

CJK_THRESHOLD = 0.3

_CJK_RANGES = (
    (0x3000, 0x303F),  # CJK punctuation
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0xFF00, 0xFFEF),  # full-width forms
    (0x20000, 0x2A6DF),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def cjk_ratio(text: str) -> float:
    chars = [c for c in text if not c.isspace()]
    if not chars:
        return 0.0
    return sum(1 for c in chars if is_cjk(c)) / len(chars)


def detect_locale(text: str, threshold: float = CJK_THRESHOLD) -> str | None:
    """``zh``/``en`` by CJK share; ``None`` for text with no visible characters."""
    if not text.strip():
        return None
    return "zh" if cjk_ratio(text) > threshold else "en"


_EN_DIRECTIVES = [
    re.compile(r"\b(?:answer|reply|respond|explain|write|output|response)\w*\b[^.?!\n]{0,30}?\bin english\b", re.I),
    re.compile(r"\bin english,? please\b", re.I),
    re.compile(r"(?:用|使用)(?:英文|英语)"),
    re.compile(r"英文回答|英语回答"),
]
_ZH_DIRECTIVES = [
    re.compile(r"\b(?:answer|reply|respond|explain|write|output|response)\w*\b[^.?!\n]{0,30}?\bin chinese\b", re.I),
    re.compile(r"\bin chinese,? please\b", re.I),
    re.compile(r"(?:用|使用)(?:中文|汉语|简体中文)"),
    re.compile(r"中文回答"),
]


def requested_locale(query: str) -> str | None:
    """Locale explicitly demanded by the query text, if any.

    When both languages are requested the later directive wins.
    """
    best: tuple[int, str] | None = None
    for locale, patterns in (("en", _EN_DIRECTIVES), ("zh", _ZH_DIRECTIVES)):
        for pat in patterns:
            for m in pat.finditer(query):
                if best is None or m.start() > best[0]:
                    best = (m.start(), locale)
    return best[1] if best else None


FENCE_LINE = re.compile(r"^[ \t]*```")


@dataclass(frozen=True)
class FenceSplit:
    prose: list[str]
    code: list[str]
    fence_lines: int
    open_at_end: bool
    first_fence_offset: int | None


def split_fences(text: str) -> FenceSplit:
    """Partition markdown into prose and fenced code by line-anchored fences."""
    prose: list[str] = []
    code: list[str] = []
    buf: list[str] = []
    inside = False
    fence_lines = 0
    first: int | None = None
    offset = 0
    for line in text.splitlines(keepends=True):
        if FENCE_LINE.match(line):
            fence_lines += 1
            if first is None:
                first = offset
            (code if inside else prose).append("".join(buf))
            buf = []
            inside = not inside
        else:
            buf.append(line)
        offset += len(line)
    (code if inside else prose).append("".join(buf))
    return FenceSplit(
        prose=[p for p in prose if p],
        code=code,
        fence_lines=fence_lines,
        open_at_end=inside,
        first_fence_offset=first,
    )


def prose_text(text: str) -> str:
    return "".join(split_fences(text).prose)
