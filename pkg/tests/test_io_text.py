from __future__ import annotations

import json

from hypothesis import given, strategies as st

from dialogsynth.jsonio import JsonlStore, dumps, file_digest, read_jsonl, write_jsonl
from dialogsynth.textutil import cjk_ratio, detect_locale, requested_locale, split_fences

json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=8), inner, max_size=4),
    max_leaves=12,
)


@given(json_values)
def test_dumps_is_canonical(value):
    text = dumps(value)
    assert json.loads(text) == value
    assert dumps(json.loads(text)) == text
    assert "\n" not in text


def test_dumps_key_order_independent():
    assert dumps({"b": 1, "a": "中"}) == dumps({"a": "中", "b": 1}) == '{"a":"中","b":1}'


def test_jsonl_store_is_idempotent(tmp_path):
    path = tmp_path / "s.jsonl"
    store = JsonlStore(path, lambda r: r["id"])
    assert store.append([{"id": 1}, {"id": 2}, {"id": 1}]) == 2
    digest = file_digest(path)
    assert store.append([{"id": 2}]) == 0
    assert file_digest(path) == digest
    reopened = JsonlStore(path, lambda r: r["id"])
    assert 1 in reopened and len(reopened) == 2
    assert reopened.append([{"id": 3}]) == 1
    assert [r["id"] for r in read_jsonl(path)] == [1, 2, 3]
    assert not list(tmp_path.glob("*.tmp*"))


def test_write_jsonl_round_trip(tmp_path):
    recs = [{"a": i, "t": "x" * i} for i in range(5)]
    write_jsonl(tmp_path / "x.jsonl", recs)
    assert read_jsonl(tmp_path / "x.jsonl") == recs


def test_locale_detection():
    assert detect_locale("This is English.") == "en"
    assert detect_locale("这是中文的说明文字。") == "zh"
    assert detect_locale("   ") is None
    assert 0 < cjk_ratio("用 Python 写") < 1


def test_requested_locale_later_wins():
    assert requested_locale("Please answer in English.") == "en"
    assert requested_locale("请用中文回答") == "zh"
    assert requested_locale("answer in English, 不对，请用中文回答") == "zh"
    assert requested_locale("Is English hard?") is None


def test_split_fences():
    text = "intro\n```py\nx = 1\n```\nmiddle\n```\ny\n"
    s = split_fences(text)
    assert s.code[0].strip() == "x = 1"
    assert s.open_at_end
    assert s.first_fence_offset == text.index("```")
    assert "intro" in "".join(s.prose) and "middle" in "".join(s.prose)


def test_split_without_fences():
    s = split_fences("just words")
    assert s.code == [] or s.code == ()
    assert s.first_fence_offset is None and not s.open_at_end
