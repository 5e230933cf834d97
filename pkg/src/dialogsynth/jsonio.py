"""JSON/JSONL persistence with atomic replace-on-write."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator


def dumps(obj: Any) -> str:
    """Canonical single-line encoding used for every persisted record."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj: Any) -> None:
    _atomic_write(Path(path), json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def read_jsonl(path: str | Path) -> list[dict]:
    return list(iter_jsonl(path))


def write_jsonl(path: str | Path, records: Iterable[Any]) -> None:
    _atomic_write(Path(path), "".join(dumps(r) + "\n" for r in records))


class JsonlStore:
    """Append-only JSONL file, deduplicated on a key.

    Appends rewrite the file through a temp file + rename, so a killed
    process leaves either the old or the new file, never a torn line.
    """

    def __init__(self, path: str | Path, key: Callable[[dict], Any]):
        self.path = Path(path)
        self.key = key
        self._lines: list[str] = []
        self._keys: set = set()
        if self.path.exists():
            for rec in iter_jsonl(self.path):
                self._lines.append(dumps(rec))
                self._keys.add(key(rec))

    def __contains__(self, k: Any) -> bool:
        return k in self._keys

    def __len__(self) -> int:
        return len(self._lines)

    def append(self, records: Iterable[dict]) -> int:
        added = 0
        for rec in records:
            k = self.key(rec)
            if k in self._keys:
                continue
            self._keys.add(k)
            self._lines.append(dumps(rec))
            added += 1
        if added or not self.path.exists():
            _atomic_write(self.path, "".join(line + "\n" for line in self._lines))
        return added


def file_digest(path: str | Path) -> str | None:
    path = Path(path)
    if not path.exists():
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
