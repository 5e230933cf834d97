"""Local repository corpus index and cursor placement."""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .jsonio import read_json, write_json
from .taxonomy import DEFAULT_TAXONOMY, UNKNOWN, CursorSpec, LineRange, Taxonomy

MAX_FILE_BYTES = 1 << 20
CONTEXT_MARGIN = 30
CONTEXT_CAP = 200

# minimum file length able to host each cursor behavior
MIN_LINES = {
    "have_active_file": 1,
    "select_line": 1,
    "select_block": 3,
    "select_multiple_lines": 3,
    "select_multiple_blocks": 5,
}


class CorpusGap(LookupError):
    pass


@dataclass(frozen=True)
class IndexedFile:
    repo: str
    path: str
    language: str
    line_count: int


@dataclass(frozen=True)
class RepoCorpusIndex:
    roots: Mapping[str, str]
    files: tuple[IndexedFile, ...]

    @classmethod
    def build(cls, roots: Iterable[str | Path], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "RepoCorpusIndex":
        named: dict[str, str] = {}
        files: list[IndexedFile] = []
        for root in roots:
            root = Path(root).resolve()
            name = root.name
            n = 2
            while name in named:
                name, n = f"{root.name}-{n}", n + 1
            named[name] = str(root)
            for dirpath, dirnames, filenames in os.walk(root):
                dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
                for fn in sorted(filenames):
                    path = Path(dirpath) / fn
                    language = taxonomy.language_for(fn)
                    if language == UNKNOWN or fn.startswith("."):
                        continue
                    lines = _count_lines(path)
                    if lines:
                        files.append(IndexedFile(name, path.relative_to(root).as_posix(), language, lines))
        return cls(roots=named, files=tuple(files))

    @classmethod
    def from_directory(cls, corpus_dir: str | Path, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "RepoCorpusIndex":
        """Every immediate subdirectory of ``corpus_dir`` is one repository."""
        corpus_dir = Path(corpus_dir)
        repos = sorted(p for p in corpus_dir.iterdir() if p.is_dir() and not p.name.startswith("."))
        return cls.build(repos, taxonomy)

    @classmethod
    def load(cls, source: str | Path, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "RepoCorpusIndex":
        source = Path(source)
        if source.is_dir():
            return cls.from_directory(source, taxonomy)
        return cls.from_dict(read_json(source))

    def path_of(self, repo: str, rel: str) -> Path:
        return Path(self.roots[repo]) / rel

    def problems(self, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> list[str]:
        out = []
        for f in self.files:
            p = self.path_of(f.repo, f.path)
            if not p.is_file() or p.stat().st_size == 0:
                out.append(f"{f.repo}/{f.path}: missing or empty")
            elif taxonomy.language_for(f.path) != f.language:
                out.append(f"{f.repo}/{f.path}: language tag {f.language} does not match extension")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "roots": dict(self.roots),
            "files": [[f.repo, f.path, f.language, f.line_count] for f in self.files],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RepoCorpusIndex":
        return cls(
            roots=dict(data["roots"]),
            files=tuple(IndexedFile(r, p, lang, int(n)) for r, p, lang, n in data["files"]),
        )

    def save(self, path: str | Path) -> None:
        write_json(path, self.to_dict())


def _count_lines(path: Path) -> int:
    try:
        if path.stat().st_size > MAX_FILE_BYTES:
            return 0
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError):
        return 0
    if not text.strip():
        return 0
    return len(text.splitlines())


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def realize_cursor(behavior: str, n: int, rng: random.Random) -> CursorSpec:
    """Random editor state of kind ``behavior`` inside a file of ``n`` lines."""
    if behavior == "no_active_file":
        return CursorSpec()
    if n < MIN_LINES[behavior]:
        raise ValueError(f"{behavior} needs at least {MIN_LINES[behavior]} lines, file has {n}")
    if behavior == "have_active_file":
        return CursorSpec(cursor_line=rng.randint(1, n))
    if behavior == "select_line":
        line = rng.randint(1, n)
        return CursorSpec(selections=(LineRange(line, line),))
    if behavior == "select_block":
        length = rng.randint(3, min(40, n))
        start = rng.randint(1, n - length + 1)
        return CursorSpec(selections=(LineRange(start, start + length - 1),))
    if behavior == "select_multiple_lines":
        k = rng.randint(2, min(4, (n + 1) // 2))
        # k non-adjacent lines: pick from n-k+1 slots and spread by index
        picks = sorted(rng.sample(range(1, n - k + 2), k))
        lines = [p + i for i, p in enumerate(picks)]
        return CursorSpec(selections=tuple(LineRange(x, x) for x in lines))
    if behavior == "select_multiple_blocks":
        k = rng.randint(2, max(2, min(3, (n + 1) // 3)))
        max_len = max(2, min(15, (n - (k - 1)) // k))
        lengths = [rng.randint(2, max_len) for _ in range(k)]
        free = n - sum(lengths) - (k - 1)
        cuts = sorted(rng.randint(0, free) for _ in range(k))
        gaps = [cuts[0]] + [cuts[i] - cuts[i - 1] for i in range(1, k)]
        ranges, pos = [], 1
        for i, (gap, length) in enumerate(zip(gaps, lengths)):
            pos += gap + (1 if i else 0)
            ranges.append(LineRange(pos, pos + length - 1))
            pos += length
        return CursorSpec(selections=tuple(ranges))
    raise ValueError(f"unknown cursor behavior {behavior!r}")


@dataclass(frozen=True)
class RepoChoice:
    repo: str | None
    file_path: str | None
    line_count: int | None
    cursor: CursorSpec


def sample_repository(language: str, cursor_behavior: str, index: RepoCorpusIndex, rng: random.Random) -> RepoChoice:
    if cursor_behavior == "no_active_file":
        return RepoChoice(None, None, None, CursorSpec())
    need = MIN_LINES[cursor_behavior]
    eligible = [f for f in index.files if f.language == language and f.line_count >= need]
    if not eligible:
        raise CorpusGap(f"corpus gap: {language}")
    f = eligible[rng.randrange(len(eligible))]
    return RepoChoice(f.repo, f.path, f.line_count, realize_cursor(cursor_behavior, f.line_count, rng))


def context_window(
    lines: list[str],
    cursor: CursorSpec,
    margin: int = CONTEXT_MARGIN,
    cap: int = CONTEXT_CAP,
) -> tuple[int, int] | None:
    """1-based inclusive span shown to the model around the editor state."""
    if not lines:
        return None
    if cursor.selections:
        first = min(r.start for r in cursor.selections)
        last = max(r.end for r in cursor.selections)
    elif cursor.cursor_line is not None:
        first = last = cursor.cursor_line
    else:
        first, last = 1, min(len(lines), cap)
    lo = max(1, first - margin)
    hi = min(len(lines), last + margin)
    if hi - lo + 1 > cap:
        hi = lo + cap - 1
    return lo, hi


def slice_lines(lines: list[str], start: int, end: int) -> str:
    return "\n".join(lines[start - 1:end])


def selected_text(lines: list[str], cursor: CursorSpec) -> str | None:
    if not cursor.selections:
        return None
    return "\n...\n".join(slice_lines(lines, r.start, r.end) for r in sorted(cursor.selections))
