from __future__ import annotations

import json

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from dialogsynth.gateway import (
    FINISH_COMPLETE,
    FINISH_ERROR,
    FINISH_LENGTH,
    MAX_ATTEMPTS,
    CandidateResponse,
    HttpChatClient,
    ModelEndpoint,
    PoolConfig,
    SamplingParams,
    connect,
    generate_candidates,
    stub_pool,
)
from dialogsynth.stub import StubChatClient, prompt_hash

MSGS = [{"role": "system", "content": "be brief"}, {"role": "user", "content": "hi"}]


def _ok(text="hello", finish="stop"):
    return httpx.Response(200, json={
        "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}],
        "usage": {"prompt_tokens": 3, "completion_tokens": 1},
    })


def _client(handler, **kw):
    ep = ModelEndpoint(id="m1", base_url="http://model.test/v1", model="m", **kw)
    return HttpChatClient(ep, transport=httpx.MockTransport(handler), sleep=lambda s: None)


def test_http_payload_shape_and_defaults():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return _ok()

    reply = _client(handler).complete(MSGS, SamplingParams(seed=7))
    assert reply.ok and reply.text == "hello" and reply.finish_reason == FINISH_COMPLETE
    assert seen["url"] == "http://model.test/v1/chat/completions"
    body = seen["body"]
    assert body["model"] == "m" and body["messages"] == MSGS and body["seed"] == 7
    assert body["temperature"] == 0.3 and body["top_p"] == 0.95


def test_length_cap_is_reported():
    assert _client(lambda r: _ok("partial", "length")).complete(MSGS).finish_reason == FINISH_LENGTH


@pytest.mark.parametrize("fault", ["timeout", "connect", "5xx"])
def test_retries_then_reports_error(fault):
    calls = []

    def handler(request):
        calls.append(1)
        if fault == "timeout":
            raise httpx.ReadTimeout("slow", request=request)
        if fault == "connect":
            raise httpx.ConnectError("refused", request=request)
        return httpx.Response(503)

    client = _client(handler)
    reply = client.complete(MSGS)
    assert len(calls) == MAX_ATTEMPTS == 3
    assert client.attempts_made == 3
    assert reply.finish_reason == FINISH_ERROR and reply.text == "" and reply.error


def test_recovers_on_third_attempt():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(502) if len(calls) < 3 else _ok("late")

    assert _client(handler).complete(MSGS).text == "late"
    assert len(calls) == 3


def test_client_errors_are_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad token"})

    reply = _client(handler).complete(MSGS)
    assert len(calls) == 1 and not reply.ok and "401" in reply.error


def test_malformed_body_is_an_error():
    reply = _client(lambda r: httpx.Response(200, json={"nope": 1})).complete(MSGS)
    assert reply.finish_reason == FINISH_ERROR


def test_token_comes_from_environment(monkeypatch):
    monkeypatch.setenv("TEST_MODEL_TOKEN", "sekrit")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return _ok()

    _client(handler, token_env="TEST_MODEL_TOKEN").complete(MSGS)
    assert seen["auth"] == "Bearer sekrit"
    ep = ModelEndpoint(id="m1", base_url="http://x", token_env="TEST_MODEL_TOKEN")
    assert "sekrit" not in json.dumps(ep.public_dict())


def test_rejects_bad_messages():
    with pytest.raises(ValueError):
        StubChatClient().complete([{"role": "robot", "content": "x"}])


def test_candidate_invariants():
    with pytest.raises(ValueError):
        CandidateResponse("e", "", FINISH_COMPLETE)
    with pytest.raises(ValueError):
        CandidateResponse("e", "text", "cancelled")
    failed = CandidateResponse.failed("e", "boom")
    assert failed.text == "" and not failed.ok
    assert CandidateResponse.from_dict(failed.to_dict()) == failed


@settings(max_examples=50, deadline=None)
@given(st.text(min_size=1, max_size=40), st.integers(0, 2**31))
def test_stub_is_deterministic(text, seed):
    msgs = [{"role": "user", "content": text}]
    a = StubChatClient(mode="echo").complete(msgs, SamplingParams(seed=seed))
    b = StubChatClient(mode="echo").complete(msgs, SamplingParams(seed=seed))
    assert a == b
    if text.strip(" "):
        assert a.text.startswith(text.split(" ")[0])


def test_stub_replies_and_failures():
    h = prompt_hash(MSGS)
    assert StubChatClient(replies={h: "fixed"}).complete(MSGS).text == "fixed"
    assert StubChatClient(fail=True).complete(MSGS).finish_reason == FINISH_ERROR
    two_turns = MSGS + [{"role": "assistant", "content": "a"}, {"role": "user", "content": "b"}]
    limited = StubChatClient(fail_after_user_turns=1)
    assert limited.complete(MSGS).ok
    assert not limited.complete(two_turns).ok


def test_stub_truncates_at_max_tokens():
    reply = StubChatClient(mode="canned", default_reply="one two three four").complete(
        MSGS, SamplingParams(max_tokens=2))
    assert reply.text == "one two" and reply.finish_reason == FINISH_LENGTH


def test_generate_candidates_order_and_isolation():
    class Boom:
        endpoint_id = "boom"

        def complete(self, messages, params=None):
            raise RuntimeError("kaput")

    pool = [StubChatClient(ModelEndpoint(id=f"s{i}", base_url="stub://"), mode="echo") for i in range(3)]
    out = generate_candidates([pool[0], Boom(), pool[2]], MSGS)
    assert [c.endpoint_id for c in out] == ["s0", "boom", "s2"]
    assert out[0].ok and out[2].ok
    assert out[1].finish_reason == FINISH_ERROR and "kaput" in out[1].error


def test_pool_config_round_trip(tmp_path):
    pool = stub_pool(2)
    path = tmp_path / "pool.json"
    path.write_text(json.dumps(pool.to_dict()))
    again = PoolConfig.from_file(path)
    assert [e.id for e in again.generators] == ["stub-gen-0", "stub-gen-1"]
    assert again.judge_client().endpoint_id == "stub-judge"
    assert isinstance(connect(again.generators[0]), StubChatClient)
    swapped = again.swap_generators([ModelEndpoint(id="new", base_url="stub://")])
    assert [c.endpoint_id for c in swapped.generator_clients()] == ["new"]


def test_pool_config_rejects_duplicates_and_unknown_fields():
    ep = ModelEndpoint(id="a", base_url="stub://")
    with pytest.raises(ValueError):
        PoolConfig(generators=[ep, ep])
    with pytest.raises(ValueError):
        PoolConfig(generators=[])
    with pytest.raises((ValueError, TypeError)):
        ModelEndpoint.from_dict({"id": "a", "base_url": "stub://", "colour": "red"})
